"""Ground states of the Laplacian on the quarter star domain and on sectors.

The quarter domain {0 < x1 < a, 0 < x2 < gamma(x1)} is meshed in mapped
coordinates (x1, eta) with x2 = eta * gamma(x1), so the mesh is a structured
grid that follows the curved boundary exactly at its nodes. Linear (P1)
finite elements on this mesh give the Neumann condition on gamma and on the
unconstrained sides weakly; Dirichlet sides are imposed by removing nodes.

The smallest eigenvalue is found by shifted inverse iteration on a sparse LU
factorisation, refined by one Richardson step between two nested meshes.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .stardomain import StarParams, gamma_boundary, lambda_ab, log_gamma_boundary

CAP_FRACTION = 1e-6
TIE_FRACTION = 1e-3
RESIDUAL_TOL = 1e-10
ACCEPT_TOL = 1e-8


class SolverFailure(RuntimeError):
    pass


class UnclassifiableShape(RuntimeError):
    pass


@dataclass
class Mesh:
    nodes: np.ndarray
    tris: np.ndarray
    dirichlet: np.ndarray  # bool per node
    shape: tuple = ()
    boundary: np.ndarray = None  # bool per node on the outer (curved) boundary
    dof: np.ndarray = None  # node -> unknown; nodes of a tied column share one
    strip: np.ndarray = None  # bool per triangle lying entirely in tied columns

    @property
    def dofs(self):
        return np.arange(len(self.nodes)) if self.dof is None else self.dof

    @property
    def n_cells(self):
        return len(self.tris) // 2

    @property
    def h(self):
        e = self.nodes[self.tris[:, [1, 2, 0]]] - self.nodes[self.tris]
        return float(np.max(np.hypot(e[..., 0], e[..., 1])))


@dataclass
class EigenResult:
    eigenvalue: float
    eigenvector: np.ndarray = field(repr=False)
    residual: float
    extrapolated: float = float("nan")
    error_estimate: float = float("nan")
    iterations: int = 0
    mesh: Mesh = field(default=None, repr=False)
    coarse: float = float("nan")

    @property
    def sign_ratio(self):
        """max |minority sign| / max |majority sign| over the mesh."""
        u = self.eigenvector
        pos, neg = np.max(u, initial=0.0), -np.min(u, initial=0.0)
        big, small = max(pos, neg), min(pos, neg)
        return small / big if big > 0 else float("inf")

    @property
    def single_signed(self):
        return self.sign_ratio < 1e-8


# --------------------------------------------------------------------------- #
# finite elements
# --------------------------------------------------------------------------- #

def assemble_p1(nodes, tris, dof=None, strip=None):
    """Stiffness and consistent mass matrices of linear triangles (CSR).

    ``dof`` maps nodes to unknowns (default identity). Triangles flagged in
    ``strip`` have all nodes tied column-wise, so the interpolant is linear in
    x1 alone; their stiffness uses that x1-gradient directly, avoiding the
    cancellation of huge x2-terms in very flat cells.
    """
    p = nodes[tris]  # (m, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)
    # gradients of the barycentric functions
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grad = np.stack([-e[..., 1], e[..., 0]], axis=-1) / det[:, None, None]
    if strip is not None and strip.any():
        ps = p[strip]
        x = ps[..., 0]
        lo = np.isclose(x, x.min(axis=1, keepdims=True), rtol=0, atol=1e-14)
        dx = x.max(axis=1) - x.min(axis=1)
        n_lo = lo.sum(axis=1, keepdims=True)
        gx = np.where(lo, -1.0 / (dx[:, None] * n_lo), 1.0 / (dx[:, None] * (3 - n_lo)))
        grad[strip] = np.stack([gx, np.zeros_like(gx)], axis=-1)
    kloc = area[:, None, None] * np.einsum("mik,mjk->mij", grad, grad)
    mloc = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    t = tris if dof is None else dof[tris]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = len(nodes) if dof is None else int(dof.max()) + 1
    K = coo_matrix((kloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = coo_matrix((mloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


def inverse_iteration(K, M, start=None, shift=0.0, deflate=False, tol=RESIDUAL_TOL,
                      maxiter=500, adaptive=True):
    """Smallest eigenpair of K u = lambda M u above ``shift``.

    With ``deflate`` the constant vector (the zero mode of a pure Neumann
    problem) is projected out M-orthogonally in every step. Once the Rayleigh
    quotient settles the shift is moved just below it and the factorisation
    is redone, which turns linear convergence at ratio lambda1/lambda2 into a
    much faster one.

    The residual is sqrt(r^T (K - shift M)^-1 r / lambda) for r = K u - lambda M u
    with u M-normalised, i.e. ||A u - lambda u|| / ||u|| measured in the norm
    dual to the energy norm (A = M^-1 K).
    """
    n = K.shape[0]
    ones = np.ones(n)
    m_one = M @ ones
    c_one = ones @ m_one

    def project(v):
        return v - (m_one @ v) / c_one * ones if deflate else v

    u = np.ones(n) if start is None else np.asarray(start, dtype=float).copy()
    u = project(u)
    u /= math.sqrt(abs(u @ (M @ u)))
    lu = splu((K - shift * M).tocsc())
    lam_old, moved, best = None, not adaptive, None
    for it in range(1, maxiter + 1):
        w = project(lu.solve(M @ u))
        w /= math.sqrt(w @ (M @ w))
        kw, mw = K @ w, M @ w
        lam = float(w @ kw)
        r = project(kw - lam * mw)
        # dual energy norm; the Euclidean norm is swamped by roundoff in thin cap cells
        res = math.sqrt(abs(r @ lu.solve(r)) / abs(lam)) if lam != 0 else float("inf")
        if not np.isfinite(res):
            raise SolverFailure("inverse iteration produced non-finite values")
        if best is None or res < best[0]:
            best = (res, lam, w, it)
        # below the roundoff floor of the solve the residual only fluctuates
        stalled = it - best[3] > 20 and best[0] < ACCEPT_TOL
        if res < tol or stalled:
            res, lam, w, _ = best if stalled else (res, lam, w, it)
            if w[np.argmax(np.abs(w))] < 0:
                w = -w
            return lam, w, res, it
        if not moved and lam_old is not None and abs(lam - lam_old) < 1e-4 * abs(lam):
            shift = lam - 5e-3 * abs(lam)
            lu = splu((K - shift * M).tocsc())
            moved = True
        lam_old = lam
        u = w
    raise SolverFailure(f"inverse iteration stagnated (residual {res:.2e} after {maxiter} steps)")


def solve_mesh(mesh, deflate=False, start=None):
    """Lowest eigenpair on ``mesh`` with Dirichlet unknowns removed."""
    K, M = assemble_p1(mesh.nodes, mesh.tris, mesh.dof, mesh.strip)
    dof = mesh.dofs
    fixed = np.zeros(K.shape[0], dtype=bool)
    fixed[dof[mesh.dirichlet]] = True
    free = ~fixed
    Kf, Mf = K[free][:, free], M[free][:, free]
    s = None
    if start is not None:
        s = np.zeros(K.shape[0])
        s[dof] = start
        s = s[free]
    lam, w, res, it = inverse_iteration(Kf, Mf, start=s, deflate=deflate)
    full = np.zeros(K.shape[0])
    full[free] = w
    return EigenResult(lam, full[dof], res, iterations=it, mesh=mesh)


def richardson(fine, coarse, order=2):
    """Extrapolate two values from meshes with h and 2h."""
    f = 2.0**order
    return (f * fine - coarse) / (f - 1.0)


# --------------------------------------------------------------------------- #
# meshes
# --------------------------------------------------------------------------- #

def cap_abscissa(p, fraction=CAP_FRACTION):
    """x1 where gamma falls to ``fraction`` * b; the mesh stops there with a Neumann cap."""
    if p.a == p.b:
        return p.a * (1 - fraction)
    target = math.log(fraction * p.b)
    return brentq(lambda x: log_gamma_boundary(p, x) - target, 0.0, p.a * (1 - 1e-15), xtol=1e-14)


def mesh_shape(p, n_cells):
    """(n_x, n_y) with roughly square cells at the wide end and n_x * n_y ~ n_cells."""
    ratio = cap_abscissa(p) / p.b
    n_y = max(2, int(round(math.sqrt(n_cells / ratio))))
    n_x = max(2, int(round(n_cells / n_y)))
    return n_x, n_y


def _structured_tris(idx):
    """Split each quad of an index grid (i, j) into two triangles, counter-clockwise."""
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def _tie_columns(col, g, tris, b, fraction=TIE_FRACTION):
    """Share one unknown per mesh column where gamma < fraction * b.

    There the domain is much thinner than any wavelength in play and the
    eigenfunctions are constant across it to relative order (gamma sqrt(lambda))^2.
    Returns (dof, strip).
    """
    tied_col = g[np.abs(col)] < fraction * b
    n = len(col)
    dof = np.arange(n)
    tied = tied_col
    if tied.any():
        keys = col[tied]
        uniq, inv = np.unique(keys, return_inverse=True)
        free_nodes = np.flatnonzero(~tied)
        dof = np.empty(n, dtype=int)
        dof[free_nodes] = np.arange(len(free_nodes))
        dof[np.flatnonzero(tied)] = len(free_nodes) + inv
    strip = tied[tris].all(axis=1)
    return dof, strip


def full_mesh(p, n_x, n_y):
    """Structured mesh of the whole star domain, built by reflecting the quarter grid.

    Node (i, j), -n_x <= i <= n_x, -n_y <= j <= n_y, sits at
    (sign(i) x_|i|, (j / n_y) gamma(x_|i|)).
    """
    xs = np.linspace(0.0, cap_abscissa(p), n_x + 1)
    g = gamma_boundary(p, xs)
    i = np.arange(-n_x, n_x + 1)
    j = np.arange(-n_y, n_y + 1)
    ii, jj = np.meshgrid(i, j, indexing="ij")
    x1 = np.sign(ii) * xs[np.abs(ii)]
    x2 = jj / n_y * g[np.abs(ii)]
    nodes = np.stack([x1.ravel(), x2.ravel()], axis=1)
    idx = np.arange(nodes.shape[0]).reshape(ii.shape)
    tris = _fix_orientation(nodes, _structured_tris(idx))
    boundary = ((np.abs(jj) == n_y) | (np.abs(ii) == n_x)).ravel()
    dof, strip = _tie_columns(ii.ravel(), g, tris, p.b)
    return Mesh(nodes, tris, np.zeros(len(nodes), dtype=bool), (n_x, n_y), boundary, dof, strip)


def quarter_mesh(p, n_x, n_y, dirichlet_side="v"):
    """Mesh of the quarter domain with Dirichlet nodes on side v (x1 = 0) or h (x2 = 0)."""
    if dirichlet_side not in ("v", "h"):
        raise ValueError("dirichlet_side must be 'v' or 'h'")
    xs = np.linspace(0.0, cap_abscissa(p), n_x + 1)
    g = gamma_boundary(p, xs)
    ii, jj = np.meshgrid(np.arange(n_x + 1), np.arange(n_y + 1), indexing="ij")
    nodes = np.stack([xs[ii].ravel(), (jj / n_y * g[ii]).ravel()], axis=1)
    idx = np.arange(len(nodes)).reshape(ii.shape)
    tris = _fix_orientation(nodes, _structured_tris(idx))
    dirichlet = (ii == 0).ravel() if dirichlet_side == "v" else (jj == 0).ravel()
    boundary = ((jj == n_y) | (ii == n_x)).ravel()
    dof, strip = _tie_columns(ii.ravel(), g, tris, p.b)
    return Mesh(nodes, tris, dirichlet, (n_x, n_y), boundary, dof, strip)


def _fix_orientation(nodes, tris):
    p = nodes[tris]
    det = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
           - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    tris = tris.copy()
    flip = det < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def sector_mesh(alpha, R, n_r, n_theta, rim="dirichlet"):
    """Polar mesh of the sector {r < R, 0 < theta < alpha} with an apex fan."""
    r = R * np.arange(1, n_r + 1) / n_r
    th = alpha * np.arange(n_theta + 1) / n_theta
    rr, tt = np.meshgrid(r, th, indexing="ij")
    ring = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
    nodes = np.vstack([[0.0, 0.0], ring])
    idx = 1 + np.arange(n_r * (n_theta + 1)).reshape(n_r, n_theta + 1)
    fan = np.stack([np.zeros(n_theta, dtype=int), idx[0, :-1], idx[0, 1:]], axis=1)
    tris = np.concatenate([fan, _structured_tris(idx)])
    tris = _fix_orientation(nodes, tris)
    rim_nodes = np.zeros(len(nodes), dtype=bool)
    rim_nodes[idx[-1]] = True
    dirichlet = rim_nodes if rim == "dirichlet" else np.zeros(len(nodes), dtype=bool)
    return Mesh(nodes, tris, dirichlet, (n_r, n_theta), rim_nodes)


def rectangle_mesh(width, height, n_x, n_y, dirichlet_side="left"):
    xs = np.linspace(0, width, n_x + 1)
    ys = np.linspace(0, height, n_y + 1)
    ii, jj = np.meshgrid(np.arange(n_x + 1), np.arange(n_y + 1), indexing="ij")
    nodes = np.stack([xs[ii].ravel(), ys[jj].ravel()], axis=1)
    idx = np.arange(len(nodes)).reshape(ii.shape)
    sides = {"left": ii == 0, "right": ii == n_x, "bottom": jj == 0, "top": jj == n_y}
    return Mesh(nodes, _fix_orientation(nodes, _structured_tris(idx)), sides[dirichlet_side].ravel(), (n_x, n_y))


# --------------------------------------------------------------------------- #
# problems
# --------------------------------------------------------------------------- #

@dataclass
class MixedProblem:
    params: StarParams
    dirichlet_side: str
    n_cells: int = 10000
    shape: tuple = None

    def __post_init__(self):
        if self.dirichlet_side not in ("v", "h"):
            raise ValueError("dirichlet_side must be 'v' or 'h'")
        if self.shape is None:
            self.shape = mesh_shape(self.params, self.n_cells)

    @property
    def mesh(self):
        return quarter_mesh(self.params, *self.shape, self.dirichlet_side)


def _with_richardson(build, shape):
    """Solve at ``shape`` and at half resolution; attach the extrapolated value."""
    fine = solve_mesh(build(*shape))
    half = tuple(max(1, s // 2) for s in shape)
    if all(2 * h == s for h, s in zip(half, shape)):
        coarse = solve_mesh(build(*half))
        fine.coarse = coarse.eigenvalue
        fine.extrapolated = richardson(fine.eigenvalue, coarse.eigenvalue)
        fine.error_estimate = abs(fine.extrapolated - fine.eigenvalue) / 3.0
    else:
        fine.extrapolated = fine.eigenvalue
    return fine


def _even(shape):
    return tuple(s + (s % 2) for s in shape)


def solve_quarter(problem):
    """Ground state of the quarter domain with Dirichlet data on one side.

    Neumann on gamma and on the other side. The half-resolution solve for the
    Richardson step uses the nested mesh, so the shape is rounded to even.
    """
    shape = _even(problem.shape)
    res = _with_richardson(lambda nx, ny: quarter_mesh(problem.params, nx, ny, problem.dirichlet_side), shape)
    if not res.eigenvalue > 0:
        raise SolverFailure("ground-state eigenvalue is not positive")
    return res


def sector_shape(alpha, n_cells):
    n_r = max(2, int(round(math.sqrt(n_cells / max(alpha, 0.1)))))
    n_t = max(2, int(round(n_cells / n_r)))
    return n_r, n_t


def solve_sector(alpha, R, n_cells=10000):
    """Sector ground state: Dirichlet on the arc, Neumann on both radii."""
    shape = _even(sector_shape(alpha, n_cells))
    return _with_richardson(lambda nr, nt: sector_mesh(alpha, R, nr, nt), shape)


def solve_rectangle(width, height, n_x, n_y, dirichlet_side="left"):
    shape = _even((n_x, n_y))
    return _with_richardson(lambda nx, ny: rectangle_mesh(width, height, nx, ny, dirichlet_side), shape)


@dataclass(frozen=True)
class GapResult:
    lambda_v: float
    lambda_h: float
    gap: float
    error_v: float
    error_h: float
    lambda_ab: float

    def __iter__(self):
        return iter((self.lambda_v, self.lambda_h, self.gap))

    @property
    def margin_ratio(self):
        """gap divided by the combined extrapolation error."""
        err = self.error_v + self.error_h
        return self.gap / err if err > 0 else float("inf")


def ground_state_gap(p, n_cells=10000):
    """(lambda_v, lambda_h, gap) from Richardson-extrapolated quarter solves."""
    rv = solve_quarter(MixedProblem(p, "v", n_cells))
    rh = solve_quarter(MixedProblem(p, "h", n_cells))
    return GapResult(rv.extrapolated, rh.extrapolated, rh.extrapolated - rv.extrapolated,
                     rv.error_estimate, rh.error_estimate, lambda_ab(p))


def solve_full(p, n_cells=10000, boundary="neumann"):
    """Ground state on the whole star domain.

    ``neumann``: first nonzero eigenvalue (constant mode deflated).
    ``dirichlet``: lowest eigenvalue with the boundary clamped.
    """
    n_x, n_y = mesh_shape(p, n_cells)
    mesh = full_mesh(p, n_x, n_y)
    if boundary == "dirichlet":
        mesh.dirichlet = mesh.boundary.copy()
        return solve_mesh(mesh)
    if boundary != "neumann":
        raise ValueError("boundary must be 'neumann' or 'dirichlet'")
    # start with both antisymmetric components so either ground state can win
    x = mesh.nodes
    start = x[:, 0] / p.a + x[:, 1] / p.b
    return solve_mesh(mesh, deflate=True, start=start)


# --------------------------------------------------------------------------- #
# nodal shape
# --------------------------------------------------------------------------- #

@dataclass
class FullDomainFunction:
    points: np.ndarray
    values: np.ndarray
    boundary: np.ndarray


def unfold(result, side):
    """Extend a quarter solution to the whole domain by reflection.

    Odd across the Dirichlet side, even across the Neumann side.
    """
    mesh = result.mesh
    x, u = mesh.nodes, result.eigenvector
    sv = -1.0 if side == "v" else 1.0
    sh = -1.0 if side == "h" else 1.0
    pts, vals, bnd = [], [], []
    for fx, fy, s in ((1, 1, 1.0), (-1, 1, sv), (1, -1, sh), (-1, -1, sv * sh)):
        pts.append(x * np.array([fx, fy]))
        vals.append(s * u)
        bnd.append(mesh.boundary)
    return FullDomainFunction(np.vstack(pts), np.concatenate(vals), np.concatenate(bnd))


def from_full_result(result):
    return FullDomainFunction(result.mesh.nodes, result.eigenvector, result.mesh.boundary)


def classify_shape(fn, rel_tol=1e-6, mismatch=1e-3):
    """Nodal pattern of a full-domain function: 'I', 'II' or 'III'.

    III: sign follows sign(x1) (nodal line v). II: sign follows sign(x2)
    (nodal line h). I: one sign on the whole outer boundary, the other inside
    (closed interior nodal curve). Up to a fraction ``mismatch`` of nodes may
    disagree with a pattern (nodes next to the nodal line).
    """
    v = fn.values
    big = np.abs(v) > rel_tol * np.max(np.abs(v))
    s = np.sign(v[big])
    pts = fn.points[big]
    for label, coord in (("III", pts[:, 0]), ("II", pts[:, 1])):
        c = np.sign(coord)
        ok = c != 0
        if ok.any():
            agree = np.mean(s[ok] == c[ok])
            if min(agree, 1.0 - agree) <= mismatch:
                return label
    bs = np.sign(v[fn.boundary & big])
    if bs.size and np.all(bs == bs[0]) and np.any(s == -bs[0]):
        return "I"
    raise UnclassifiableShape("nodal set matches none of I, II, III")


# --------------------------------------------------------------------------- #
# Dirichlet problems on masks
# --------------------------------------------------------------------------- #

def dirichlet_ground_state(mask, h):
    """Lowest Dirichlet eigenvalue of the 5-point Laplacian on the cells of ``mask``.

    ``mask`` is a boolean array of grid points inside the open set; every point
    outside is a zero boundary value.
    """
    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise SolverFailure("empty mask")
    num = -np.ones(mask.shape, dtype=int)
    num[mask] = np.arange(n)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, 4.0 / h**2)]
    ii, jj = np.nonzero(mask)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        inside = (ni >= 0) & (ni < mask.shape[0]) & (nj >= 0) & (nj < mask.shape[1])
        k = np.flatnonzero(inside)
        nb = num[ni[k], nj[k]]
        ok = nb >= 0
        rows.append(num[ii[k[ok]], jj[k[ok]]])
        cols.append(nb[ok])
        vals.append(np.full(ok.sum(), -1.0 / h**2))
    A = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    eye = coo_matrix((np.ones(n), (np.arange(n), np.arange(n))), shape=(n, n)).tocsr()
    lam, w, res, it = inverse_iteration(A, eye)
    u = np.zeros(mask.shape)
    u[mask] = w
    return EigenResult(lam, u, res, iterations=it)


def star_mask(p, h, shrink=1.0):
    """Grid points (spacing h, centred on the origin) strictly inside shrink * Omega."""
    xm = cap_abscissa(p)
    nx, ny = int(math.ceil(xm / h)) + 1, int(math.ceil(p.b / h)) + 1
    x = np.arange(-nx, nx + 1) * h
    y = np.arange(-ny, ny + 1) * h
    X, Y = np.meshgrid(x, y, indexing="ij")
    g = shrink * gamma_boundary(p, np.minimum(np.abs(X) / shrink, p.a))
    return (np.abs(X) < shrink * xm) & (np.abs(Y) < g)


# --------------------------------------------------------------------------- #
# export
# --------------------------------------------------------------------------- #

def export_result_json(path, p, side, n_cells, result, meta=None):
    out = {
        "a": p.a, "b": p.b, "side": side, "n_cells": int(n_cells),
        "lambda": result.eigenvalue, "extrapolated": result.extrapolated, "residual": result.residual,
    }
    if meta:
        out["config"] = meta
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_gap_sweep(path, rows, header_lines=()):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for h in header_lines:
            fh.write(f"# {h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["b_over_a", "lambda_v", "lambda_h", "gap", "lambda_ab"])
        for ratio, g in rows:
            w.writerow([format(ratio, ".17g")] + [format(float(v), ".17g")
                                                  for v in (g.lambda_v, g.lambda_h, g.gap, g.lambda_ab)])
