import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from neumann_atlas import isoperimetric as iso
from neumann_atlas import rearrange as ra
from neumann_atlas.spectral import quarter_mesh, sector_mesh
from neumann_atlas.stardomain import SectorParams, StarParams, gamma_boundary, quarter_area

ALPHA = 0.2 * math.pi


@pytest.fixture(scope="module")
def narrow():
    return StarParams(1.0, 0.1)


@pytest.fixture(scope="module")
def cone():
    # psi = 1 - r / R on the unit-area sector of angle pi/4
    alpha = math.pi / 4
    R = math.sqrt(2 / alpha)
    mesh = sector_mesh(alpha, R, 50, 400)
    vals = 1 - np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1]) / R
    return alpha, R, mesh, np.clip(vals, 0.0, None)


@pytest.fixture(scope="module")
def bumps_case(narrow):
    mesh, vals = ra.sample_on_quarter(narrow, ra.random_bumps(narrow, 3), 20000)
    prof = ra.level_profile(mesh.nodes, mesh.tris, vals)
    rf = ra.rearrange_to_sector(prof, ra.matching_sector(prof, ALPHA))
    return mesh, vals, prof, rf


def test_fraction_matches_sampling(rng):
    # superlevel fraction of one linear triangle against Monte Carlo on the reference triangle
    f = np.array([[0.2, 0.5, 1.3]])
    u = rng.random((400000, 2))
    u = np.where(u.sum(1, keepdims=True) > 1, 1 - u, u)
    vals = f[0, 0] * (1 - u[:, 0] - u[:, 1]) + f[0, 1] * u[:, 0] + f[0, 2] * u[:, 1]
    for t in (0.1, 0.3, 0.5, 0.9, 1.4):
        frac, _ = ra._fraction(f, [t])
        assert frac[0, 0] == pytest.approx(np.mean(vals > t), abs=3e-3)


def test_constant_function(narrow):
    mesh = quarter_mesh(narrow, 40, 8)
    vals = np.full(len(mesh.nodes), 0.7)
    prof = ra.level_profile(mesh.nodes, mesh.tris, vals)
    assert prof.mu([0.0, 0.69])[0] == pytest.approx(prof.total_area, rel=1e-14)
    assert prof.mu([0.69])[0] == pytest.approx(prof.total_area, rel=1e-14)
    assert prof.mu([0.7, 0.8]).max() == 0.0
    rf = ra.rearrange_to_sector(prof, ra.matching_sector(prof, ALPHA))
    np.testing.assert_allclose(rf(np.linspace(0, rf.sector.R, 50)), 0.7, rtol=1e-14)


def test_cone_distribution(cone):
    alpha, R, mesh, vals = cone
    prof = ra.level_profile(mesh.nodes, mesh.tris, vals)
    t = np.linspace(0.0, 0.99, 50)
    # the mesh is a polygon inscribed in the sector: area error O(1/n_theta^2)
    np.testing.assert_allclose(prof.mu(t), (1 - t) ** 2 * prof.total_area, atol=5e-5)
    assert np.all(np.diff(prof.superlevel_area) <= 0)
    assert prof.superlevel_area[-1] == 0.0


def test_cone_rearranges_to_itself(cone):
    alpha, R, mesh, vals = cone
    prof = ra.level_profile(mesh.nodes, mesh.tris, vals)
    s = ra.matching_sector(prof, alpha)
    rf = ra.rearrange_to_sector(prof, s)
    r = np.linspace(0, s.R, 200)
    # the P1 interpolant of r is exact only on the rays, hence 1e-5 pointwise
    np.testing.assert_allclose(rf(r), 1 - r / s.R, atol=1e-5)
    chk = ra.gradient_inequality_check(mesh.nodes, mesh.tris, vals, alpha)
    assert chk.lhs == pytest.approx(chk.rhs, rel=1e-6)


def test_profile_refinement_oracle():
    p = StarParams(1.0, 0.2)

    def psi(x1, x2):
        return np.cos(0.5 * math.pi * x1 / p.a) * np.cos(0.5 * math.pi * x2 / p.b)

    coarse = quarter_mesh(p, 100, 20)
    fine = quarter_mesh(p, 400, 80)
    pc = ra.level_profile(coarse.nodes, coarse.tris, psi(*coarse.nodes.T))
    pf = ra.level_profile(fine.nodes, fine.tris, psi(*fine.nodes.T))
    t = np.linspace(0.0, 0.95, 40)
    total = quarter_area(p)
    assert np.max(np.abs(pc.mu(t) - pf.mu(t))) < 2e-3 * total
    # inscribed boundary chords: area error O(h^2)
    assert abs(pf.total_area - total) < abs(pc.total_area - total) / 8 < 1e-4 * total


def test_mu_derivative(bumps_case):
    _, _, prof, _ = bumps_case
    t = np.linspace(0.05, 0.9, 9) * prof.t_max
    d = 1e-6 * prof.t_max
    fd = (prof.mu(t + d) - prof.mu(t - d)) / (2 * d)
    np.testing.assert_allclose(prof.dmu(t), fd, rtol=1e-4, atol=1e-8)


def test_rearranged_is_nonincreasing(bumps_case):
    *_, rf = bumps_case
    v = rf(np.linspace(0, rf.sector.R, 5000))
    assert np.all(np.diff(v) <= 0)


def test_equimeasurability(bumps_case):
    *_, rf = bumps_case
    err, cell = ra.equimeasurability_error(rf)
    assert err <= cell


@pytest.mark.parametrize("name", list(ra.NORM_TESTS))
def test_norm_identity(bumps_case, name):
    mesh, vals, _, rf = bumps_case
    rep = {r.name: r for r in ra.norm_identity(mesh.nodes, mesh.tris, vals, rf)}[name]
    assert rep.rel_error < 1e-4


def test_domain_integral_exact_for_quadratics():
    mesh = quarter_mesh(StarParams(1.0, 1.0), 10, 10)
    vals = mesh.nodes[:, 0] + 2 * mesh.nodes[:, 1]
    tri = mesh.nodes[mesh.tris]
    # the square of a linear function on each triangle: degree 2, integrated exactly
    ref = 0.0
    for t, v in zip(tri, vals[mesh.tris]):
        area = 0.5 * abs((t[1, 0] - t[0, 0]) * (t[2, 1] - t[0, 1]) - (t[1, 1] - t[0, 1]) * (t[2, 0] - t[0, 0]))
        ref += area / 6 * (v @ v + v.sum() ** 2) / 2
    assert ra.domain_integral(mesh.nodes, mesh.tris, vals, np.square) == pytest.approx(ref, rel=1e-12)


def test_area_mismatch_and_negative_input(bumps_case):
    _, _, prof, _ = bumps_case
    with pytest.raises(ra.AreaMismatch):
        ra.rearrange_to_sector(prof, SectorParams(ALPHA, 1.01 * ra.matching_sector(prof, ALPHA).R))
    mesh = quarter_mesh(StarParams(1.0, 0.1), 20, 4)
    vals = np.zeros(len(mesh.nodes))
    vals[3] = -1e-9
    with pytest.raises(ra.NegativeInput):
        ra.level_profile(mesh.nodes, mesh.tris, vals)
    vals[3] = -1e-13
    ra.level_profile(mesh.nodes, mesh.tris, vals)


def test_monotonicity_of_rearrangement(narrow):
    phi = ra.random_bumps(narrow, 5)
    mesh, big = ra.sample_on_quarter(narrow, phi, 10000)
    small = big * ra.smoothstep(1 - mesh.nodes[:, 0] / (4 * narrow.b)) * 0.9
    rfs = []
    for v in (small, big):
        prof = ra.level_profile(mesh.nodes, mesh.tris, v)
        rfs.append(ra.rearrange_to_sector(prof, ra.matching_sector(prof, ALPHA)))
    r = np.linspace(0, rfs[0].sector.R, 3000)
    assert np.all(rfs[0](r) <= rfs[1](r) + 1e-12)


def test_gradient_inequality_swapped_profile(narrow):
    mesh, vals = ra.sample_on_quarter(narrow, ra.swapped_profile(narrow), 20000)
    chk = ra.gradient_inequality_check(mesh.nodes, mesh.tris, vals, ALPHA)
    assert chk.holds and chk.lhs < chk.rhs


@pytest.mark.parametrize("seed", range(10))
def test_gradient_inequality_random_bumps(narrow, seed):
    mesh, vals = ra.sample_on_quarter(narrow, ra.random_bumps(narrow, seed), 8000)
    assert ra.gradient_inequality_check(mesh.nodes, mesh.tris, vals, ALPHA).holds


def test_rearranged_dirichlet_matches_p1_on_radial_function(cone):
    alpha, R, mesh, vals = cone
    prof = ra.level_profile(mesh.nodes, mesh.tris, vals)
    assert ra.rearranged_dirichlet(prof, alpha) == pytest.approx(prof.total_area / R**2, rel=1e-4)


def test_perimeter_inequality_holds_at_small_angle(narrow):
    f = ra.swapped_profile(narrow)
    t = np.linspace(0.1, 0.9, 5)
    rep = ra.perimeter_inequality_check(narrow, f, t, SectorParams(ALPHA, 1.0), n_cells=10000)
    assert rep.fraction_holding == 1.0


def test_perimeter_violation_at_wide_angle(narrow):
    # long thin superlevel sets along gamma cannot beat a wide sector
    f = ra.swapped_profile(narrow)
    t = np.linspace(0.1, 0.9, 5)
    rep = ra.perimeter_inequality_check(narrow, f, t, SectorParams(0.9 * math.pi, 1.0), n_cells=10000)
    assert rep.fraction_holding < 1.0


def test_free_boundary_length_of_straight_level():
    # psi = x2 on the a = b domain: {psi = t} is the segment x2 = t from v to gamma
    p = StarParams(1.0, 1.0)
    for t in (0.2, 0.5):
        xe = brentq(lambda x: gamma_boundary(p, x) - t, 0.0, 1.0 - 1e-12)
        h = 1 / 800
        got = ra.free_boundary_length(p, lambda x1, x2: x2, t, h)
        # the ends within h of v and of gamma are dropped
        assert xe - 3 * h < got <= xe


def test_arc_minimizer_level_set_ratio():
    # the boundary of an arc-minimizer level set has F(A) >= pi/4 > alpha
    p = StarParams(1.0, 0.05)
    for frac in (1e-4, 1e-2, 0.2):
        arc = iso.arc_minimizer(p, frac * quarter_area(p))
        assert arc.F / ALPHA >= (math.pi / 4) / ALPHA > 1


def test_perimeter_report_json(tmp_path, narrow):
    rep = ra.perimeter_inequality_check(narrow, ra.swapped_profile(narrow), [0.5], SectorParams(ALPHA, 1.0),
                                        n_cells=4000)
    rep.to_json(tmp_path / "p.json", meta={"seed": 1})
    js = json.loads((tmp_path / "p.json").read_text())
    assert set(js["rows"][0]) == {"t", "mu", "perim_h_original", "perim_h_star", "holds"}
    assert js["config"] == {"seed": 1}


def test_test_functions_vanish_near_h(narrow):
    x1 = np.linspace(0, narrow.a, 50)
    for f in (ra.swapped_profile(narrow), ra.random_bumps(narrow, 1)):
        np.testing.assert_allclose(f(x1, 0.0 * x1), 0.0, atol=1e-15)
    assert np.all(ra.random_bumps(narrow, 1)(x1, 0.1 * narrow.b + 0 * x1) == 0.0)
