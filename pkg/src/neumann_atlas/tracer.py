"""Neumann lines, Neumann domains and their rho statistics.

Neumann lines leave each saddle along the four Hessian eigen-directions and
follow the normalised gradient flow (arc-length parametrisation) until they
enter the capture radius of an extremum. Lines are integrated in batches with
an embedded Dormand-Prince 5(4) pair.

Domains are the faces of the graph (critical points, Neumann lines) embedded
in the torus. Faces are traced from the cyclic order of lines around each
critical point; each polygon is lifted to R^2 before measuring it.
"""
import csv
import json
import math
from collections import defaultdict
from functools import cmp_to_key
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import morse
from .morse import MAXIMUM, MINIMUM, SADDLE
from .stardomain import constants

SADDLE_OFFSET = 1e-6
CAPTURE_RADIUS = 1e-4
ANGLE_RADIUS = 1e-3
MAX_ARC_LENGTH = 4.0
STEP_TOL = 1e-10
# step cap in grid cells; chord error of the boundary polygon is O(cap^2)
STEP_CAP = 0.125

LENS, WEDGE, STAR = "lens", "wedge", "star"


class EscapeError(RuntimeError):
    """A traced line did not reach an extremum within the arc-length budget."""


class AssemblyError(RuntimeError):
    """Traced lines do not close up into a generic Neumann domain."""


class AmbiguousAngle(RuntimeError):
    """Corner angle at an extremum is neither ~0 nor ~pi."""


@dataclass
class Polyline:
    """Vertices in lifted (unwrapped) coordinates; start is a saddle position in [0,1)^2."""

    vertices: np.ndarray
    saddle: int = -1
    extremum: int = -1
    ascending: bool = True

    @property
    def wrapped(self):
        return self.vertices % 1.0

    @property
    def crossings(self):
        """Integer cell shifts between consecutive vertices (torus wraparound flags)."""
        cell = np.floor(self.vertices)
        return np.any(np.diff(cell, axis=0) != 0, axis=1)

    @property
    def length(self):
        return float(np.sum(np.hypot(*np.diff(self.vertices, axis=0).T)))


@dataclass
class NeumannDomain:
    boundary: list
    corners: dict
    kind: str
    area: float
    perimeter: float
    rho: float
    angles: dict = field(default_factory=dict)
    polygon: np.ndarray = field(default=None, repr=False)


@dataclass
class DomainCensus:
    domains: list
    excluded_count: int
    lam: float
    failed_lines: int = 0
    exclusions: dict = field(default_factory=dict)
    crit: object = field(default=None, repr=False)

    def of_kind(self, kind):
        return [d for d in self.domains if d.kind == kind]

    @property
    def total_area(self):
        return float(sum(d.area for d in self.domains))


# --------------------------------------------------------------------------- #
# integration
# --------------------------------------------------------------------------- #

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _direction(ev, x, sigma):
    g = ev.gradient(x[:, 0], x[:, 1])
    n = np.hypot(g[:, 0], g[:, 1])
    n = np.where(n == 0, 1.0, n)
    return sigma[:, None] * g / n[:, None]


@dataclass
class _TraceResult:
    paths: list
    end: np.ndarray
    ok: np.ndarray
    arc: np.ndarray


def integrate_lines(ev, x0, sigma, targets, h_max, capture=CAPTURE_RADIUS,
                    atol=STEP_TOL, max_length=MAX_ARC_LENGTH, max_iter=200000, stall=200):
    """Integrate dx/ds = sigma grad(psi)/|grad(psi)| for a batch of start points.

    Each line stops once it is within ``capture`` of a point of ``targets``
    (wrapped positions); steps are limited to half the remaining distance so the
    capture disc cannot be jumped over. A line whose step stays below
    ``1e-3 * capture`` for ``stall`` consecutive iterations has converged to a
    critical point missing from ``targets`` (one below the scan resolution) and
    fails. Returns the lifted paths, the index of the captured target
    (-1 on failure) and a success mask.
    """
    x0 = np.asarray(x0, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    k = len(x0)
    tree = cKDTree(np.asarray(targets) % 1.0, boxsize=1.0)
    x = x0.copy()
    h = np.full(k, min(h_max, 1e-4))
    arc = np.zeros(k)
    end = np.full(k, -1)
    active = np.ones(k, dtype=bool)
    slow = np.zeros(k, dtype=int)
    hist_x, hist_idx = [x0.copy()], [np.arange(k)]
    f0 = _direction(ev, x, sigma)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi = x[idx]
        dist, nn = tree.query(xi % 1.0)
        hit = dist <= capture
        if hit.any():
            end[idx[hit]] = nn[hit]
            active[idx[hit]] = False
            idx, xi, dist = idx[~hit], xi[~hit], dist[~hit]
            if idx.size == 0:
                break
        hi = np.minimum(h[idx], np.maximum(0.5 * dist, 0.25 * capture))
        hi = np.minimum(hi, h_max)
        sg = sigma[idx]
        ks = [f0[idx]]
        for s in range(1, 7):
            xs = xi + hi[:, None] * sum(a * kk for a, kk in zip(_A[s], ks))
            ks.append(_direction(ev, xs, sg))
        x5 = xi + hi[:, None] * sum(b * kk for b, kk in zip(_B5, ks) if b)
        x4 = xi + hi[:, None] * sum(b * kk for b, kk in zip(_B4, ks) if b)
        err = np.hypot(*(x5 - x4).T)
        accept = err <= atol
        fac = np.clip(0.9 * (atol / np.maximum(err, 1e-300)) ** 0.2, 0.2, 5.0)
        acc = idx[accept]
        x[acc] = x5[accept]
        f0[acc] = ks[6][accept]
        arc[acc] += hi[accept]
        h[idx] = hi * fac
        tiny = hi < 1e-3 * capture
        slow[idx] = np.where(tiny, slow[idx] + 1, 0)
        active[idx[slow[idx] > stall]] = False
        if acc.size:
            hist_x.append(x[acc].copy())
            hist_idx.append(acc)
        over = arc[idx] > max_length
        active[idx[over]] = False
    ok = end >= 0
    # unpack history into per-line paths
    all_idx = np.concatenate(hist_idx)
    all_x = np.concatenate(hist_x)
    order = np.argsort(all_idx, kind="stable")
    all_idx, all_x = all_idx[order], all_x[order]
    bounds = np.searchsorted(all_idx, np.arange(k + 1))
    paths = [all_x[bounds[i]:bounds[i + 1]] for i in range(k)]
    return _TraceResult(paths, end, ok, arc)


def _saddle_directions(ev, pos):
    h11, h12, h22 = ev.hessian(pos[0], pos[1])
    w, v = np.linalg.eigh(np.array([[h11, h12], [h12, h22]]))
    # w[0] < 0 (descent axis), w[1] > 0 (ascent axis)
    return v[:, 1], v[:, 0]


def _lift_near(point, ref):
    return point + np.round(ref - point)


def _finish_path(path, target):
    tgt = _lift_near(np.asarray(target, dtype=float), path[-1])
    return np.vstack([path, tgt])


def trace_neumann_line(fld, saddle, direction, crit=None, h_max=None,
                       offset=SADDLE_OFFSET, capture=CAPTURE_RADIUS):
    """Trace one Neumann line from ``saddle`` along ``direction`` (a Hessian eigenvector).

    Ascent or descent is chosen from the sign of the Hessian along the direction.
    The endpoint is snapped to the captured extremum.
    """
    if saddle.kind != SADDLE:
        raise ValueError("start point must be a saddle")
    if crit is None:
        crit = morse.find_critical_points(fld)
    ev = fld.evaluator
    d = np.asarray(direction, dtype=float)
    d = d / np.hypot(*d)
    h11, h12, h22 = ev.hessian(*saddle.position)
    ascending = d @ np.array([[h11, h12], [h12, h22]]) @ d > 0
    kind = MAXIMUM if ascending else MINIMUM
    targets = [p for p in crit.points if p.kind == kind]
    tpos = np.array([p.position for p in targets])
    start = np.asarray(saddle.position) + offset * d
    res = integrate_lines(ev, start[None], np.array([1.0 if ascending else -1.0]), tpos,
                          h_max or STEP_CAP / fld.N, capture)
    if not res.ok[0]:
        raise EscapeError(f"line from saddle {saddle.position} escaped (arc {res.arc[0]:.3f})")
    path = np.vstack([np.asarray(saddle.position)[None], res.paths[0]])
    ext = targets[res.end[0]]
    return Polyline(_finish_path(path, ext.position), -1, crit.points.index(ext), bool(ascending))


def trace_all_lines(fld, crit, h_max=None, offset=SADDLE_OFFSET, capture=CAPTURE_RADIUS):
    """Trace the four Neumann lines of every saddle in one batch.

    Returns a list of Polyline (failed lines omitted) and the failure count.
    """
    ev = fld.evaluator
    pts = crit.points
    sad = [i for i, p in enumerate(pts) if p.kind == SADDLE]
    idx_max = np.array([i for i, p in enumerate(pts) if p.kind == MAXIMUM])
    idx_min = np.array([i for i, p in enumerate(pts) if p.kind == MINIMUM])
    h_max = h_max or STEP_CAP / fld.N
    starts, sigmas, owners = [], [], []
    for i in sad:
        pos = np.asarray(pts[i].position)
        up, down = _saddle_directions(ev, pos)
        for d, sg in ((up, 1.0), (-up, 1.0), (down, -1.0), (-down, -1.0)):
            starts.append(pos + offset * d)
            sigmas.append(sg)
            owners.append(i)
    starts, sigmas, owners = np.array(starts), np.array(sigmas), np.array(owners)
    lines, failed = [], 0
    for sg, idx_t in ((1.0, idx_max), (-1.0, idx_min)):
        sel = np.flatnonzero(sigmas == sg)
        if sel.size == 0:
            continue
        if idx_t.size == 0:
            failed += sel.size
            continue
        tpos = np.array([pts[j].position for j in idx_t])
        res = integrate_lines(ev, starts[sel], sigmas[sel], tpos, h_max, capture)
        for n, s in enumerate(sel):
            if not res.ok[n]:
                failed += 1
                continue
            owner = owners[s]
            path = np.vstack([np.asarray(pts[owner].position)[None], res.paths[n]])
            ext = int(idx_t[res.end[n]])
            lines.append(Polyline(_finish_path(path, pts[ext].position), int(owner), ext, sg > 0))
    return lines, failed


# --------------------------------------------------------------------------- #
# assembly
# --------------------------------------------------------------------------- #

def _exit_point(path, center, radius):
    """First point of ``path`` (starting at ``center``) at distance >= radius."""
    d = np.hypot(*(path - center).T)
    j = int(np.argmax(d >= radius)) if np.any(d >= radius) else len(path) - 1
    if j == 0:
        return path[0]
    # interpolate on the crossing segment
    d0, d1 = d[j - 1], d[j]
    t = 0.0 if d1 == d0 else (radius - d0) / (d1 - d0)
    return path[j - 1] + np.clip(t, 0, 1) * (path[j] - path[j - 1])


def _rotation_radius(crit):
    pos = crit.positions()
    tree = cKDTree(pos % 1.0, boxsize=1.0)
    d, _ = tree.query(pos % 1.0, k=2)
    return 0.3 * d[:, 1]


def _wrap_angle(t):
    return (t + math.pi) % (2 * math.pi) - math.pi


def _pair_order(pa, pb, r0):
    """-1 if path b lies counter-clockwise of path a (both leave the same vertex), else +1.

    Lines into an extremum along the same slow direction can be closer than the
    integration error at the rotation radius; non-crossing lines keep their order
    further out, so compare where they are most separated.
    """
    c = pa[0]
    pb = pb + np.round(c - pb[0])
    r1 = min(np.hypot(*(pa - c).T).max(), np.hypot(*(pb - c).T).max())
    best = 0.0
    for r in np.geomspace(r0, max(r0, 0.9 * r1), 24):
        qa, qb = _exit_point(pa, c, r) - c, _exit_point(pb, c, r) - c
        d = _wrap_angle(math.atan2(qb[1], qb[0]) - math.atan2(qa[1], qa[0]))
        if abs(d) > abs(best):
            best = d
        if abs(d) > 1e-3:
            break
    return -1 if best > 0 else 1


def _half_edges(lines, crit, tie=1e-4):
    """Half-edge list per vertex, sorted counter-clockwise.

    Half-edge (e, 0) leaves the saddle of line e, (e, 1) leaves its extremum.
    Paths are oriented outward from the vertex, in lifted coordinates.
    """
    radius = _rotation_radius(crit)
    around = defaultdict(list)
    paths = {}
    for e, ln in enumerate(lines):
        for end in (0, 1):
            path = ln.vertices if end == 0 else ln.vertices[::-1]
            v = ln.saddle if end == 0 else ln.extremum
            r = radius[v] if end == 1 else min(radius[v], 10 * SADDLE_OFFSET)
            q = _exit_point(path, path[0], r) - path[0]
            around[v].append((math.atan2(q[1], q[0]), e, end))
            paths[(e, end)] = path
    for v, lst in around.items():
        lst.sort()
        if len(lst) < 2:
            continue
        # resolve near-ties (non-wrapping clusters) by comparing further out
        out, k = [], 0
        while k < len(lst):
            j = k + 1
            while j < len(lst) and lst[j][0] - lst[j - 1][0] < tie:
                j += 1
            group = lst[k:j]
            if len(group) > 1:
                r0 = radius[v]
                group.sort(key=cmp_to_key(
                    lambda a, b: _pair_order(paths[(a[1], a[2])], paths[(b[1], b[2])], r0)))
            out.extend(group)
            k = j
        around[v] = out
    return around


def _faces(lines, around):
    """Trace faces of the rotation system; each face is a list of half-edges (e, end)."""
    pos_in = {}
    for v, lst in around.items():
        for k, (_, e, end) in enumerate(lst):
            pos_in[(e, end)] = (v, k)
    seen = set()
    faces = []
    for start in pos_in:
        if start in seen:
            continue
        face, he = [], start
        while he not in seen:
            seen.add(he)
            face.append(he)
            e, end = he
            twin = (e, 1 - end)
            v, k = pos_in[twin]
            lst = around[v]
            # next half-edge clockwise from the twin around the far vertex
            _, e2, end2 = lst[(k - 1) % len(lst)]
            he = (e2, end2)
            if len(face) > 4 * len(lines) + 4:
                break
        faces.append(face)
    return faces


def _face_polygon(face, lines):
    pieces = []
    cur = None
    for e, end in face:
        path = lines[e].vertices if end == 0 else lines[e].vertices[::-1]
        if cur is not None:
            path = path + np.round(cur - path[0])
        pieces.append(path if not pieces else path[1:])
        cur = path[-1]
    poly = np.vstack(pieces)
    return poly, poly[-1] - poly[0]


def _shoelace(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_perimeter(poly, closed=True):
    d = np.diff(np.vstack([poly, poly[:1]]) if closed else poly, axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def _corner_angle(prev_path, next_path, ccw, radius):
    """Interior angle at the common start vertex of two outward paths."""
    c = next_path[0]
    a_out = _exit_point(next_path, c, radius) - c
    a_in = _exit_point(prev_path, c, radius) - c
    t_out, t_in = math.atan2(a_out[1], a_out[0]), math.atan2(a_in[1], a_in[0])
    ang = (t_in - t_out) % (2 * math.pi) if ccw else (t_out - t_in) % (2 * math.pi)
    return ang


def _approach_side(ev, ext_pos, path):
    """Sign of the slow-eigendirection coordinate of a line close to an extremum, and anisotropy."""
    h11, h12, h22 = ev.hessian(*ext_pos)
    w, v = np.linalg.eigh(np.array([[h11, h12], [h12, h22]]))
    slow = v[:, int(np.argmin(np.abs(w)))]
    aniso = abs(abs(w[1]) - abs(w[0])) / max(abs(w[0]), abs(w[1]))
    p = path[1] - path[0] if len(path) > 1 else np.zeros(2)
    return float(np.sign(p @ slow)), aniso


def _classify_corner(angle, side_a, side_b, aniso, degree=4):
    """Return 0.0, pi, or raise AmbiguousAngle."""
    if angle < math.pi / 8:
        return 0.0
    if 7 * math.pi / 8 < angle < 9 * math.pi / 8:
        return math.pi
    if angle > 15 * math.pi / 8:
        # two same-side lines closer than the measurement noise at this radius;
        # a full 2 pi sector needs a vertex with no other lines
        if degree > 2 and side_a == side_b != 0:
            return 0.0
        raise AmbiguousAngle(f"corner angle {angle:.3f} (reflex)")
    if aniso > 1e-6 and side_a != 0 and side_b != 0:
        # the measured radius is outside the asymptotic regime; use the approach sides
        if side_a == side_b:
            if angle < math.pi:
                return 0.0
            raise AmbiguousAngle(f"corner angle {angle:.3f} (reflex)")
        return math.pi
    raise AmbiguousAngle(f"corner angle {angle:.3f}")


def classify_domain(domain, fld):
    """Kind of an assembled domain from its corner angles at the two extrema.

    Angles are measured between the boundary lines at distance ANGLE_RADIUS from
    the extremum: < pi/8 counts as 0, within pi/8 of pi counts as pi. Angles in
    between (lines not yet in their asymptotic direction) are decided by the side
    of the slow Hessian axis each line approaches from. At an isotropic extremum
    the lines meet at right angles; such domains are labelled by the direction of
    their max-min axis (star when parallel to x1, the b <= a convention).
    """
    decided = {}
    iso = []
    for key in ("p", "q"):
        info = domain.angles[key]
        if info["aniso"] <= 1e-6:
            iso.append(key)
            continue
        decided[key] = _classify_corner(info["angle"], info["side_in"], info["side_out"], info["aniso"],
                                        info.get("degree", 4))
    if iso:
        if len(iso) == 2 and all(abs(domain.angles[k]["angle"] - math.pi / 2) < math.pi / 8 for k in iso):
            axis = domain.corners["axis"]
            return STAR if abs(axis[0]) >= abs(axis[1]) else LENS
        raise AmbiguousAngle("isotropic extremum with non-right corner angle")
    zeros = sum(1 for v in decided.values() if v == 0.0)
    return {2: STAR, 0: LENS, 1: WEDGE}[zeros]


def domain_geometry(domain, lam):
    """(area, perimeter, rho) of a closed lifted boundary polygon."""
    poly = domain.polygon if isinstance(domain, NeumannDomain) else np.asarray(domain)
    area = abs(_shoelace(poly))
    perim = polygon_perimeter(poly)
    return area, perim, area * math.sqrt(lam) / perim


def assemble_domains(fld, crit, lines=None, failed=0, angle_radius=ANGLE_RADIUS):
    """Assemble every Neumann domain of ``fld`` from traced lines.

    Faces that are not bounded by exactly max-saddle-min-saddle, that do not
    close in the plane, or whose corner angles are ambiguous are excluded and
    counted by reason.
    """
    if lines is None:
        lines, failed = trace_all_lines(fld, crit)
    pts = crit.points
    around = _half_edges(lines, crit)
    faces = _faces(lines, around)
    ev = fld.evaluator
    rot_r = _rotation_radius(crit)
    domains, excl = [], defaultdict(int)
    for face in faces:
        try:
            domains.append(_build_domain(face, lines, pts, ev, fld.lam, rot_r, angle_radius, around))
        except AssemblyError:
            excl["assembly"] += 1
        except AmbiguousAngle:
            excl["angle"] += 1
    census = DomainCensus([], 0, fld.lam, failed, {}, crit)
    for d in domains:
        try:
            d.kind = classify_domain(d, fld)
            census.domains.append(d)
        except AmbiguousAngle:
            excl["angle"] += 1
    census.exclusions = dict(excl)
    census.excluded_count = int(sum(excl.values()))
    return census


def _build_domain(face, lines, pts, ev, lam, rot_r, angle_radius, around=None):
    if len(face) != 4:
        raise AssemblyError(f"face with {len(face)} boundary lines")
    # vertex each half-edge leaves from
    verts = [lines[e].saddle if end == 0 else lines[e].extremum for e, end in face]
    kinds = [pts[v].kind for v in verts]
    if sorted(kinds) != sorted([MAXIMUM, MINIMUM, SADDLE, SADDLE]):
        raise AssemblyError(f"non-generic corner set {kinds}")
    poly, gap = _face_polygon(face, lines)
    if np.hypot(*gap) > 1e-9:
        raise AssemblyError("boundary does not close in the plane (non-contractible face)")
    poly = poly[:-1]
    signed = _shoelace(poly)
    ccw = signed > 0
    boundary = [lines[e] for e, _ in face]
    corners, angles = {}, {}
    lifted = {}
    n = len(face)
    for k, (e, end) in enumerate(face):
        v = verts[k]
        out_path = lines[e].vertices if end == 0 else lines[e].vertices[::-1]
        lifted[v] = out_path[0]
        if pts[v].kind == SADDLE:
            corners.setdefault("s", []).append(v)
            continue
        key = "p" if pts[v].kind == MAXIMUM else "q"
        corners[key] = v
        pe, pend = face[(k - 1) % n]
        # previous half-edge arrives at v; reverse it to point outward from v
        prev_path = lines[pe].vertices[::-1] if pend == 0 else lines[pe].vertices
        prev_path = prev_path + np.round(out_path[0] - prev_path[0])
        r = min(angle_radius, rot_r[v])
        ang = _corner_angle(prev_path, out_path, ccw, r)
        s_in, aniso = _approach_side(ev, pts[v].position, prev_path)
        s_out, _ = _approach_side(ev, pts[v].position, out_path)
        degree = len(around[v]) if around is not None else 4
        angles[key] = {"angle": ang, "side_in": s_in, "side_out": s_out, "aniso": aniso, "degree": degree}
    corners["s1"], corners["s2"] = corners.pop("s")
    axis = lifted[corners["q"]] - lifted[corners["p"]]
    corners["axis"] = axis - np.round(axis)
    area = abs(signed)
    perim = polygon_perimeter(poly)
    dom = NeumannDomain(boundary, corners, "", area, perim, area * math.sqrt(lam) / perim, angles, poly)
    return dom


def census_field(fld, h_max=None):
    """Critical points, lines and domains of one field."""
    crit = morse.find_critical_points(fld)
    lines, failed = trace_all_lines(fld, crit, h_max=h_max)
    return assemble_domains(fld, crit, lines, failed)


# --------------------------------------------------------------------------- #
# statistics
# --------------------------------------------------------------------------- #

@dataclass
class RhoStatistics:
    bin_edges: np.ndarray
    counts: np.ndarray
    pdf: np.ndarray
    per_type: dict
    exceed_ground: float
    exceed_excited: float
    exceed_by_type: dict
    n_domains: int
    n_by_type: dict
    excluded: int

    def summary(self):
        c = constants()
        return {
            "n_domains": self.n_domains,
            "n_by_type": self.n_by_type,
            "excluded": self.excluded,
            "bound_ground": c.rho_ground_bound,
            "bound_excited": c.rho_excited_bound,
            "exceed_ground": self.exceed_ground,
            "exceed_excited": self.exceed_excited,
            "exceed_by_type": self.exceed_by_type,
        }


def rho_statistics(censuses, bin_width=0.01, rho_max=1.5):
    """Histogram of rho (overall and per type) and fractions above j1'/2 and j1'/sqrt 2."""
    censuses = list(censuses)
    if not censuses:
        raise ValueError("no censuses given")
    c = constants()
    rho = np.array([d.rho for cs in censuses for d in cs.domains])
    kinds = np.array([d.kind for cs in censuses for d in cs.domains])
    nb = int(round(rho_max / bin_width))
    edges = np.linspace(0.0, nb * bin_width, nb + 1)

    def hist(vals):
        cnt, _ = np.histogram(vals, bins=edges)
        tot = max(len(vals), 1)
        return cnt, cnt / (tot * bin_width)

    counts, pdf = hist(rho)
    per_type, exceed_t, n_t = {}, {}, {}
    for kd in (LENS, WEDGE, STAR):
        sel = rho[kinds == kd]
        per_type[kd] = hist(sel)
        n_t[kd] = int(sel.size)
        exceed_t[kd] = {
            "ground": float(np.mean(sel > c.rho_ground_bound)) if sel.size else float("nan"),
            "excited": float(np.mean(sel > c.rho_excited_bound)) if sel.size else float("nan"),
        }
    n = max(len(rho), 1)
    return RhoStatistics(
        edges, counts, pdf, per_type,
        float(np.sum(rho > c.rho_ground_bound) / n),
        float(np.sum(rho > c.rho_excited_bound) / n),
        exceed_t, int(len(rho)), n_t, int(sum(cs.excluded_count for cs in censuses)),
    )


def _fmt(x):
    return format(float(x), ".17g")


def export_census_csv(censuses, path, header_lines=()):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for h in header_lines:
            fh.write(f"# {h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain_id", "kind", "area", "perimeter", "rho"])
        k = 0
        for cs in censuses:
            for d in cs.domains:
                w.writerow([k, d.kind, _fmt(d.area), _fmt(d.perimeter), _fmt(d.rho)])
                k += 1


def export_histogram(stats, csv_path, json_path=None, header_lines=(), extra=None):
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        for h in header_lines:
            fh.write(f"# {h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count", "pdf"])
        for i, cnt in enumerate(stats.counts):
            w.writerow([_fmt(stats.bin_edges[i]), _fmt(stats.bin_edges[i + 1]), int(cnt), _fmt(stats.pdf[i])])
    if json_path:
        out = stats.summary()
        if extra:
            out.update(extra)
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
