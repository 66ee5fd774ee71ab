"""Critical points of torus eigenfunctions.

Detection: a grid cell is a candidate when both gradient components change
sign (or vanish) over its four corners. Each candidate is refined by Newton's
method on the closed-form gradient and duplicates are merged.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

MAXIMUM, MINIMUM, SADDLE = "maximum", "minimum", "saddle"

GRAD_TOL = 1e-12
DET_TOL = 1e-8
MAX_NEWTON = 50


class DegenerateCritical(RuntimeError):
    """Hessian (nearly) singular at a critical point: the field is not Morse."""


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class CriticalPoint:
    position: tuple
    kind: str
    value: float
    hessian_eigs: tuple
    residual: float = 0.0
    newton_steps: int = 0

    @property
    def x(self):
        return np.array(self.position)


@dataclass
class CriticalSet:
    points: list
    merge_radius: float = 0.0
    dropped_candidates: int = field(default=0, repr=False)

    @property
    def counts(self):
        kinds = [p.kind for p in self.points]
        return kinds.count(MAXIMUM), kinds.count(MINIMUM), kinds.count(SADDLE)

    @property
    def euler(self):
        n_max, n_min, n_sad = self.counts
        return n_max + n_min - n_sad

    def of_kind(self, kind):
        return [p for p in self.points if p.kind == kind]

    def positions(self, kind=None):
        pts = self.points if kind is None else self.of_kind(kind)
        return np.array([p.position for p in pts]).reshape(-1, 2)


def _classify(h11, h12, h22):
    det = h11 * h22 - h12 * h12
    half_tr = 0.5 * (h11 + h22)
    disc = np.sqrt(np.maximum(half_tr**2 - det, 0.0))
    eigs = (half_tr - disc, half_tr + disc)
    if det < 0:
        kind = SADDLE
    elif half_tr < 0:
        kind = MAXIMUM
    else:
        kind = MINIMUM
    return kind, eigs, det


def _newton_batch(ev, x0, tol, max_iter=MAX_NEWTON):
    """Vectorised Newton on grad psi = 0.

    Returns positions, final gradient norms, iteration counts and a converged mask.
    """
    x = np.array(x0, dtype=float, copy=True)
    steps = np.zeros(len(x), dtype=int)
    g = ev.gradient(x[:, 0], x[:, 1])
    gn = np.hypot(g[:, 0], g[:, 1])
    active = gn > tol
    stalled = np.zeros(len(x), dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        h = ev.hessian(x[idx, 0], x[idx, 1])
        det = h[:, 0] * h[:, 2] - h[:, 1] ** 2
        det = np.where(det == 0, np.finfo(float).tiny, det)
        gi = g[idx]
        dx = (h[:, 2] * gi[:, 0] - h[:, 1] * gi[:, 1]) / det
        dy = (-h[:, 1] * gi[:, 0] + h[:, 0] * gi[:, 1]) / det
        x[idx, 0] -= dx
        x[idx, 1] -= dy
        steps[idx] += 1
        g[idx] = ev.gradient(x[idx, 0], x[idx, 1])
        gn[idx] = np.hypot(g[idx, 0], g[idx, 1])
        # roundoff floor: Newton step below 1e-15 no longer moves the point
        tiny_step = np.hypot(dx, dy) < 1e-15
        stalled[idx] = tiny_step
        active[idx] = (gn[idx] > tol) & ~tiny_step
    converged = (gn <= tol) | (stalled & (gn <= 1e3 * tol))
    return x, gn, steps, converged


def _grad_tol(fld):
    # absolute 1e-12 for fields of unit size; scaled by the field's amplitude otherwise
    scale = max(1.0, float(np.max(np.abs(fld.values))) / 2.0)
    return GRAD_TOL * scale


def _make_point(ev, pos, gn, steps, lam):
    h11, h12, h22 = ev.hessian(pos[0], pos[1])
    kind, eigs, det = _classify(h11, h12, h22)
    if abs(det) < DET_TOL * lam * lam:
        raise DegenerateCritical(f"|det H| = {abs(det):.3e} at {tuple(pos)}")
    return CriticalPoint(
        position=(wrap_unit(pos[0]), wrap_unit(pos[1])),
        kind=kind,
        value=float(ev.value(pos[0], pos[1])),
        hessian_eigs=(float(eigs[0]), float(eigs[1])),
        residual=float(gn),
        newton_steps=int(steps),
    )


def refine_critical_point(fld, approx):
    """Newton-refine a single critical point starting from ``approx``."""
    ev = fld.evaluator
    x, gn, steps, ok = _newton_batch(ev, np.array([approx], dtype=float), _grad_tol(fld))
    if not ok[0]:
        raise NoConvergence(f"Newton did not converge from {approx} (|grad| = {gn[0]:.2e})")
    return _make_point(ev, x[0], gn[0], steps[0], fld.lam)


def candidate_cells(gx, gy):
    """Indices (i, j) of periodic grid cells where both gradient components can vanish."""
    def straddles(g):
        corners = np.stack([g, np.roll(g, -1, 0), np.roll(g, -1, 1), np.roll(np.roll(g, -1, 0), -1, 1)])
        return (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)

    return np.argwhere(straddles(gx) & straddles(gy))


def find_critical_points(fld, scan_resolution=None):
    """Detect, refine, classify and deduplicate all critical points of ``fld``.

    ``scan_resolution`` overrides the grid used for the sign-change scan
    (default: the field's own N).
    """
    ev = fld.evaluator
    n = scan_resolution or fld.N
    gx, gy = ev.grid(n, derivative=1)
    cells = candidate_cells(gx, gy)
    h = 1.0 / n
    start = (cells + 0.5) * h
    x, gn, steps, ok = _newton_batch(ev, start, _grad_tol(fld))
    # accept only points that stayed near their cell (periodic distance)
    d = (x - start + 0.5) % 1.0 - 0.5
    near = np.max(np.abs(d), axis=1) <= 1.5 * h
    keep = np.flatnonzero(ok & near)
    pos = x[keep] % 1.0

    merge_r = 1.0 / (4 * n)
    order = np.lexsort((pos[:, 1], pos[:, 0]))
    pos, keep = pos[order], keep[order]
    tree = cKDTree(np.minimum(pos, np.nextafter(1.0, 0)), boxsize=1.0)
    taken = np.zeros(len(pos), dtype=bool)
    points = []
    for i in range(len(pos)):
        if taken[i]:
            continue
        for j in tree.query_ball_point(pos[i], merge_r):
            taken[j] = True
        k = keep[i]
        points.append(_make_point(ev, x[k], gn[k], steps[k], fld.lam))
    points.sort(key=lambda p: (p.kind, p.position))
    return CriticalSet(points, merge_r, int(len(cells) - len(keep)))


def export_critical_csv(crit, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "kind", "value"])
        for p in crit.points:
            w.writerow([format(p.position[0], ".17g"), format(p.position[1], ".17g"), p.kind, format(p.value, ".17g")])


def wrap_unit(x):
    """x mod 1 in [0, 1); tiny negatives map to 0 rather than 1.0."""
    w = float(x) % 1.0
    return 0.0 if w >= 1.0 else w


def periodic_distance(p, q):
    d = (np.asarray(p, dtype=float) - np.asarray(q, dtype=float) + 0.5) % 1.0 - 0.5
    return float(math.hypot(d[0], d[1]))
