import math

import numpy as np
import pytest

from neumann_atlas import isoperimetric as iso
from neumann_atlas.stardomain import StarParams, gamma_boundary, quarter_area

P = StarParams(1.0, 0.05)


@pytest.fixture(scope="module")
def curve():
    return iso.boundary_curve(P)


@pytest.fixture(scope="module")
def total():
    return quarter_area(P)


def test_functional_identities():
    assert iso.F_functional(2.0, 1.0) == 2.0
    assert iso.cheeger_functional(2.0, 1.0) == 0.25
    for beta, r in ((0.3, 2.0), (math.pi / 2, 0.7)):
        L, A = beta * r, 0.5 * beta * r * r
        assert iso.F_functional(L, A) == pytest.approx(beta, rel=1e-14)
        assert iso.cheeger_functional(L, A) == pytest.approx(1 / (4 * r * r), rel=1e-14)
        F = iso.F_functional(L, A)
        assert iso.cheeger_functional(L, A) == pytest.approx((F / L) ** 2 / 4, rel=1e-14)


def test_boundary_curves(curve):
    x = np.linspace(0.0, 0.999, 50)
    np.testing.assert_allclose(curve.value(x), gamma_boundary(P, x), rtol=1e-14, atol=1e-300)
    h = 1e-7
    xm = np.linspace(0.01, 0.3, 7)
    fd = (curve.value(xm + h) - curve.value(xm - h)) / (2 * h)
    np.testing.assert_allclose(curve.slope(xm), fd, rtol=1e-5, atol=1e-12)
    assert curve.total_area() == pytest.approx(quarter_area(P), rel=1e-12)
    g = iso.boundary_curve(P, "gaussian")
    fd = (g.value(xm + h) - g.value(xm - h)) / (2 * h)
    np.testing.assert_allclose(g.slope(xm), fd, rtol=1e-5, atol=1e-12)
    with pytest.raises(ValueError):
        iso.boundary_curve(P, "spline")


@pytest.mark.parametrize("frac", [1e-6, 1e-4, 1e-2, 0.1, 0.3, 0.6])
def test_arc_invariants(curve, total, frac):
    eta = frac * total
    arc = iso.arc_minimizer(P, eta, curve=curve)
    r0, r1 = iso.attachment_residuals(arc, curve)
    assert r0 < 1e-6 and r1 < 1e-6
    assert iso.contains_corner(arc, curve)
    poly = iso.closed_curve(arc, curve)
    assert iso.shoelace_area(poly) == pytest.approx(eta, rel=1e-8)
    assert arc.boundary_length == pytest.approx(arc.radius * arc.phi, rel=1e-14)
    # the arc's points are at distance r from the centre and run from v to gamma
    d = np.hypot(arc.arc[:, 0] - arc.center[0], arc.arc[:, 1] - arc.center[1])
    np.testing.assert_allclose(d, arc.radius, rtol=1e-12)
    np.testing.assert_allclose(arc.arc[0], arc.attach_points[0], atol=1e-12 * P.b)
    np.testing.assert_allclose(arc.arc[-1], arc.attach_points[1], atol=1e-12 * P.b)


def test_arc_length_by_polyline(curve, total):
    arc = iso.arc_minimizer(P, 0.05 * total, curve=curve)
    seg = np.diff(arc.arc, axis=0)
    assert np.sum(np.hypot(seg[:, 0], seg[:, 1])) == pytest.approx(arc.boundary_length, rel=1e-8)


def test_F_approaches_quarter_pi(curve, total):
    fracs = np.geomspace(1e-6, 0.3, 40)
    F = np.array([iso.arc_minimizer(P, f * total, curve=curve).F for f in fracs])
    assert np.all(F > math.pi / 4)
    assert F[0] - math.pi / 4 < 1e-2
    # monotone for small eta
    small = fracs < 1e-2
    assert np.all(np.diff(F[small]) > 0)


def test_phi_tends_to_quarter_pi(curve, total):
    phis = [iso.arc_minimizer(P, f * total, curve=curve).phi for f in (1e-4, 1e-5, 1e-6)]
    assert all(p > math.pi / 4 for p in phis)
    assert phis[0] > phis[1] > phis[2]


@pytest.mark.parametrize("frac", [1e-4, 1e-2, 0.2, 0.5])
def test_length_derivative_identity(frac, total):
    fd, two_phi = iso.length_derivative_check(P, frac * total)
    assert fd == pytest.approx(two_phi, rel=1e-4)


def test_transition_and_tangent_arcs(curve, total):
    xp, eta_t = iso.transition_point(P, curve=curve)
    arc = iso.arc_minimizer(P, eta_t, curve=curve)
    assert arc.center[1] - arc.radius == pytest.approx(0.0, abs=1e-12 * P.b)
    for frac in (1.001, 1.2, 1.4):
        eta = frac * eta_t
        if eta >= total:
            continue
        s = iso.tangent_arc_set(P, eta, curve=curve, xp_transition=xp)
        assert s.phase == 2
        r0, r1 = iso.attachment_residuals(s, curve)
        assert r0 < 1e-6 and r1 < 1e-6
        assert iso.shoelace_area(iso.closed_curve(s, curve)) == pytest.approx(eta, rel=1e-8)
        assert s.center[1] == pytest.approx(s.radius, rel=1e-12)
    # the two families meet continuously
    s = iso.tangent_arc_set(P, eta_t * (1 + 1e-9), curve=curve, xp_transition=xp)
    assert s.boundary_length == pytest.approx(arc.boundary_length, rel=1e-6)


def test_no_arc_outside_domain(total):
    with pytest.raises(iso.NoArcFound):
        iso.arc_minimizer(P, 0.0)
    with pytest.raises(iso.NoArcFound):
        iso.arc_minimizer(P, 1.01 * total)


@pytest.fixture(scope="module")
def cheeger(total):
    return iso.cheeger_curve(P, np.linspace(1e-3, 0.999, 80) * total)


def test_cheeger_curve_shape(cheeger, total):
    assert cheeger.single_interior_minimum()
    assert 0 < cheeger.transition_eta < total
    assert np.all(cheeger.F > math.pi / 4)
    phases = [r.phase for r in cheeger.rows]
    assert phases == sorted(phases) and set(phases) == {1, 2}


def test_gaussian_profile_reproduces_curve():
    p = StarParams(1.0, 0.01)
    tot = quarter_area(p)
    grid = np.linspace(0.01, 0.99, 25)
    exact = iso.cheeger_curve(p, grid * tot)
    approx = iso.cheeger_curve(p, grid * iso.boundary_curve(p, "gaussian").total_area(), mode="gaussian")
    np.testing.assert_allclose(approx.C, exact.C, rtol=1e-2)
    np.testing.assert_allclose(approx.F, exact.F, rtol=1e-2)


def test_cheeger_csv(tmp_path, cheeger):
    cheeger.to_csv(tmp_path / "c.csv", header_lines=["a=1"])
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "# a=1" and rows[1] == "eta,F,C,radius,phi"
    data = np.loadtxt(tmp_path / "c.csv", delimiter=",", skiprows=2)
    np.testing.assert_array_equal(data[:, 2], cheeger.C)


def test_convexity():
    assert iso.convexity_check(StarParams(1.0, 1.0))
    x = np.linspace(0, 1, 10_000)
    assert np.max(np.abs(np.diff(gamma_boundary(StarParams(1.0, 1.0), x), 2))) < 1e-12
    assert iso.convexity_check(StarParams(1.0, 0.3))
    assert iso.convexity_check(StarParams(1.0, 0.05))


@pytest.mark.parametrize("alpha", [1, 2, 3, 8, 17, 64])
def test_power_family(alpha):
    assert iso.power_family_margin(alpha) >= -1e-15


def test_power_family_fails_below_one():
    assert iso.power_family_margin(0.5) < 0
