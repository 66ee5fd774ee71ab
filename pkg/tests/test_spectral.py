import json
import math

import numpy as np
import pytest
from scipy.sparse.linalg import eigsh
from scipy.special import jn_zeros

from neumann_atlas import spectral as sp
from neumann_atlas.stardomain import StarParams, gamma_boundary, lambda_ab

J0SQ = jn_zeros(0, 1)[0] ** 2


@pytest.fixture(scope="module")
def gap_01():
    return sp.ground_state_gap(StarParams(1.0, 0.1), 4000)


def test_sector_ground_state():
    res = sp.solve_sector(math.pi / 2, 1.0, 10000)
    assert abs(res.eigenvalue - J0SQ) < 0.01 * J0SQ
    assert abs(res.extrapolated - J0SQ) < abs(res.eigenvalue - J0SQ)
    assert res.coarse > res.eigenvalue > J0SQ


def test_sector_radius_scaling():
    r1 = sp.solve_sector(math.pi / 4, 1.0, 2000).extrapolated
    r2 = sp.solve_sector(math.pi / 4, 2.0, 2000).extrapolated
    assert r2 == pytest.approx(r1 / 4, rel=1e-10)


def test_rectangle_converges_monotonically():
    vals = [sp.solve_rectangle(1.0, 1.0, n, n).eigenvalue for n in (8, 16, 32)]
    assert vals[0] > vals[1] > vals[2] > math.pi**2 / 4
    ext = sp.solve_rectangle(1.0, 1.0, 32, 32).extrapolated
    assert ext == pytest.approx(math.pi**2 / 4, rel=1e-5)
    # Dirichlet on the top side instead: same value by symmetry
    assert sp.solve_rectangle(1.0, 1.0, 32, 32, "top").eigenvalue == pytest.approx(vals[2], rel=1e-12)


def test_against_sparse_eigsh():
    mesh = sp.quarter_mesh(StarParams(1.0, 0.2), 60, 12, "v")
    res = sp.solve_mesh(mesh)
    K, M = sp.assemble_p1(mesh.nodes, mesh.tris, mesh.dof, mesh.strip)
    fixed = np.zeros(K.shape[0], dtype=bool)
    fixed[mesh.dofs[mesh.dirichlet]] = True
    free = ~fixed
    w = eigsh(K[free][:, free].tocsc(), k=1, M=M[free][:, free].tocsc(), sigma=0.0, which="LM")[0]
    assert res.eigenvalue == pytest.approx(w[0], rel=1e-10)


def test_assembly_reproduces_area_and_zero_mode():
    p = StarParams(1.0, 0.2)
    mesh = sp.quarter_mesh(p, 40, 8, "v")
    K, M = sp.assemble_p1(mesh.nodes, mesh.tris)
    one = np.ones(K.shape[0])
    assert np.max(np.abs(K @ one)) < 1e-9
    # mass of the constant is the mesh area, close to the quarter area
    tri = mesh.nodes[mesh.tris]
    e1, e2 = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    assert np.all(signed > 0)
    assert one @ (M @ one) == pytest.approx(signed.sum(), rel=1e-12)
    assert np.all(mesh.nodes[:, 1] <= gamma_boundary(p, mesh.nodes[:, 0]) * (1 + 1e-12) + 1e-15)


def test_v_problem_matches_analytic_eigenvalue():
    p = StarParams(1.0, 0.2)
    res = sp.solve_quarter(sp.MixedProblem(p, "v", 10000))
    assert lambda_ab(p) == pytest.approx(64.15, abs=0.01)
    assert abs(res.eigenvalue - lambda_ab(p)) < 0.01 * lambda_ab(p)
    assert abs(res.extrapolated - lambda_ab(p)) < 1e-3 * lambda_ab(p)
    assert res.residual < 1e-8
    assert res.single_signed


def test_h_problem_ground_state_is_single_signed():
    res = sp.solve_quarter(sp.MixedProblem(StarParams(1.0, 0.2), "h", 4000))
    assert res.eigenvalue > 0 and res.single_signed and res.residual < 1e-8


def test_gap_positive_for_narrow_domain(gap_01):
    lv, lh, gap = gap_01
    assert gap > 0
    assert gap_01.margin_ratio > 3
    assert lv == pytest.approx(gap_01.lambda_ab, rel=1e-2)


def test_gap_scaling(gap_01):
    g2 = sp.ground_state_gap(StarParams(2.0, 0.2), 4000)
    assert g2.lambda_v == pytest.approx(gap_01.lambda_v / 4, rel=1e-9)
    assert g2.lambda_h == pytest.approx(gap_01.lambda_h / 4, rel=1e-9)
    assert g2.gap == pytest.approx(gap_01.gap / 4, rel=1e-8)


def test_unfolded_shapes():
    p = StarParams(1.0, 0.2)
    rv = sp.solve_quarter(sp.MixedProblem(p, "v", 2000))
    rh = sp.solve_quarter(sp.MixedProblem(p, "h", 2000))
    assert sp.classify_shape(sp.unfold(rv, "v")) == "III"
    assert sp.classify_shape(sp.unfold(rh, "h")) == "II"


def test_full_neumann_ground_state_is_v_mode():
    p = StarParams(1.0, 0.1)
    full = sp.solve_full(p, 8000)
    assert sp.classify_shape(sp.from_full_result(full)) == "III"
    assert full.eigenvalue == pytest.approx(lambda_ab(p), rel=2e-2)
    dirichlet = sp.solve_full(p, 8000, boundary="dirichlet")
    assert dirichlet.eigenvalue > full.eigenvalue
    with pytest.raises(ValueError):
        sp.solve_full(p, 100, boundary="robin")


def test_unclassifiable_shape():
    pts = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]])
    fn = sp.FullDomainFunction(pts, np.array([1.0, -1.0, -1.0, 1.0]), np.ones(4, dtype=bool))
    with pytest.raises(sp.UnclassifiableShape):
        sp.classify_shape(fn)


def test_dirichlet_disk():
    h, r = 1 / 100, 1.0
    x = np.arange(-110, 111) * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    res = sp.dirichlet_ground_state(X**2 + Y**2 < r * r, h)
    assert res.eigenvalue == pytest.approx(J0SQ / r**2, rel=2e-2)


def test_domain_monotonicity():
    p = StarParams(1.0, 0.25)
    h = 1 / 160
    lam = [sp.dirichlet_ground_state(sp.star_mask(p, h, s), h).eigenvalue for s in (0.6, 0.8, 1.0)]
    assert lam[0] >= lam[1] >= lam[2]
    small, big = sp.star_mask(p, h, 0.6), sp.star_mask(p, h, 1.0)
    assert np.all(big[small])


def test_solver_failures():
    with pytest.raises(sp.SolverFailure):
        sp.dirichlet_ground_state(np.zeros((4, 4), dtype=bool), 0.1)
    with pytest.raises(ValueError):
        sp.MixedProblem(StarParams(1.0, 0.2), "x")


def test_cap_abscissa():
    p = StarParams(1.0, 0.1)
    xc = sp.cap_abscissa(p)
    assert gamma_boundary(p, xc) == pytest.approx(1e-6 * p.b, rel=1e-8)
    assert sp.cap_abscissa(StarParams(1.0, 1.0)) == pytest.approx(1 - 1e-6)


def test_exports(tmp_path, gap_01):
    p = StarParams(1.0, 0.2)
    res = sp.solve_quarter(sp.MixedProblem(p, "v", 1000))
    sp.export_result_json(tmp_path / "r.json", p, "v", 1000, res, meta={"seed": None})
    js = json.loads((tmp_path / "r.json").read_text())
    assert set(js) == {"a", "b", "side", "n_cells", "lambda", "extrapolated", "residual", "config"}
    assert js["lambda"] == res.eigenvalue
    sp.export_gap_sweep(tmp_path / "g.csv", [(0.1, gap_01)], header_lines=["x"])
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert rows[1] == "b_over_a,lambda_v,lambda_h,gap,lambda_ab"
    assert float(rows[2].split(",")[3]) == gap_01.gap
