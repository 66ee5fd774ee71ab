"""Rearrangement of functions on the quarter domain onto a circular sector.

Functions are handled through their piecewise-linear interpolant on a
triangle mesh. For a linear function on a triangle with sorted vertex values
f1 <= f2 <= f3 the superlevel fraction is

    1 - (t - f1)^2 / ((f2 - f1)(f3 - f1))   on [f1, f2]
    (f3 - t)^2 / ((f3 - f1)(f3 - f2))       on [f2, f3]

so the distribution function mu(t) = |{psi > t}| and its derivative are exact.
The rearranged function psi*(r) on S_{alpha,R} is the inverse of mu in the
variable m = alpha r^2 / 2.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np
from skimage.measure import find_contours

from .spectral import assemble_p1, quarter_mesh, mesh_shape
from .stardomain import SectorParams, gamma_boundary, gamma_prime


class NegativeInput(ValueError):
    pass


class AreaMismatch(ValueError):
    pass


def _triangle_data(nodes, tris, values):
    p = nodes[tris]
    area = 0.5 * np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    f = np.sort(values[tris], axis=1)
    return area, f


def _fraction(f, t):
    """Superlevel fraction and its t-derivative; f (m, 3) sorted, t (k,) -> (k, m)."""
    t = np.asarray(t, dtype=float)[:, None]
    f1, f2, f3 = f[:, 0], f[:, 1], f[:, 2]
    d31 = f3 - f1
    d21 = f2 - f1
    d32 = f3 - f2
    frac = np.where(t < f1, 1.0, 0.0)
    dfrac = np.zeros(np.broadcast(t, f1).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = (t >= f1) & (t < f2) & (d21 > 0)
        v_lo = 1.0 - (t - f1) ** 2 / (d21 * d31)
        g_lo = -2.0 * (t - f1) / (d21 * d31)
        hi = (t >= f2) & (t < f3) & (d32 > 0)
        v_hi = (f3 - t) ** 2 / (d31 * d32)
        g_hi = -2.0 * (f3 - t) / (d31 * d32)
    frac = np.where(lo, v_lo, frac)
    frac = np.where(hi, v_hi, frac)
    dfrac = np.where(lo, g_lo, dfrac)
    dfrac = np.where(hi, g_hi, dfrac)
    return frac, dfrac


@dataclass
class LevelProfile:
    thresholds: np.ndarray
    superlevel_area: np.ndarray
    total_area: float
    areas: np.ndarray = field(repr=False, default=None)
    sorted_values: np.ndarray = field(repr=False, default=None)
    _order: np.ndarray = field(repr=False, default=None)

    @property
    def t_min(self):
        return float(self.sorted_values[:, 0].min())

    @property
    def t_max(self):
        return float(self.sorted_values[:, 2].max())

    def _eval(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        f = self.sorted_values
        if self._order is None:
            order = np.argsort(f[:, 0], kind="stable")
            self._order = order
            self._f1 = f[order, 0]
            # area with f1 > t, by suffix sums over the sorted f1
            self._tail = np.concatenate([np.cumsum(self.areas[order][::-1])[::-1], [0.0]])
            self._span = float(np.max(f[:, 2] - f[:, 0]))
        mu = np.empty(t.shape)
        dmu = np.empty(t.shape)
        for k, tk in enumerate(t):
            hi = np.searchsorted(self._f1, tk, side="right")
            lo = np.searchsorted(self._f1, tk - self._span, side="left")
            idx = self._order[lo:hi]
            fr, dfr = _fraction(f[idx], [tk])
            mu[k] = self._tail[hi] + fr[0] @ self.areas[idx]
            dmu[k] = dfr[0] @ self.areas[idx]
        return mu, dmu

    def mu(self, t):
        """|{psi > t}| of the piecewise-linear interpolant (exact)."""
        return self._eval(t)[0]

    def dmu(self, t):
        return self._eval(t)[1]


def level_profile(nodes, tris, values, n_thresholds=512):
    """Distribution function of a nonnegative piecewise-linear function.

    ``thresholds`` are n_thresholds equispaced levels in [0, max psi]; the
    exact mu is available through the returned object.
    """
    values = np.asarray(values, dtype=float)
    if values.min() < -1e-12:
        raise NegativeInput(f"min psi = {values.min():.3e} < 0")
    values = np.maximum(values, 0.0)
    area, f = _triangle_data(np.asarray(nodes, dtype=float), np.asarray(tris), values)
    prof = LevelProfile(np.empty(0), np.empty(0), float(area.sum()), area, f)
    t = np.linspace(0.0, prof.t_max, n_thresholds)
    prof.thresholds = t
    prof.superlevel_area = prof.mu(t)
    return prof


def sample_on_quarter(p, func, n_cells=20000):
    """Mesh of the quarter domain and nodal values of ``func(x1, x2)``."""
    mesh = quarter_mesh(p, *mesh_shape(p, n_cells))
    return mesh, np.asarray(func(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)


# --------------------------------------------------------------------------- #
# rearranged function
# --------------------------------------------------------------------------- #

@dataclass
class RearrangedFunction:
    sector: SectorParams
    profile: LevelProfile = field(repr=False)
    table_m: np.ndarray = field(repr=False)
    table_t: np.ndarray = field(repr=False)

    def of_measure(self, m):
        """psi* as a function of m = alpha r^2 / 2 (the inverse distribution)."""
        m = np.asarray(m, dtype=float)
        # table_m is decreasing in t; interpolate t as a function of m
        return np.interp(m, self.table_m[::-1], self.table_t[::-1],
                         left=self.table_t[-1], right=self.table_t[0])

    def radial_values(self, r):
        r = np.asarray(r, dtype=float)
        return self.of_measure(0.5 * self.sector.alpha * r * r)

    __call__ = radial_values


def matching_sector(profile, alpha):
    """S_{alpha,R} with the area of the profile's domain."""
    return SectorParams(alpha, math.sqrt(2 * profile.total_area / alpha))


def rearrange_to_sector(profile, s, n_table=4096):
    """psi*(r) = sup{t : mu(t) > alpha r^2 / 2} on the sector ``s``."""
    if abs(s.area - profile.total_area) > 1e-9 * max(1.0, profile.total_area):
        raise AreaMismatch(f"sector area {s.area} != domain area {profile.total_area}")
    lo, hi = profile.t_min, profile.t_max
    # equispaced in t plus quantiles of the vertex values (roughly equispaced in m)
    q = np.quantile(profile.sorted_values.ravel(), np.linspace(0.0, 1.0, n_table))
    t = np.unique(np.concatenate([np.linspace(lo, hi, n_table), q]))
    m = profile.mu(t)
    # mu is right-continuous and drops from total to mu(t_min) at t_min
    m[0] = profile.total_area if lo == 0.0 else m[0]
    m = np.minimum.accumulate(m)
    return RearrangedFunction(s, profile, m, t)


# --------------------------------------------------------------------------- #
# checks
# --------------------------------------------------------------------------- #

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def _gauss_panels(a, b, n):
    edges = np.linspace(a, b, n + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_X).ravel()
    w = (half[:, None] * _GL_W).ravel()
    return x, w


def rearranged_dirichlet(profile, alpha, n_panels=512):
    """||grad psi*||^2 on the sector = 2 alpha int mu / |mu'| dt (exact mu)."""
    t, w = _gauss_panels(0.0, profile.t_max, n_panels)
    mu, dmu = profile._eval(t)
    ok = dmu < 0
    return float(2 * alpha * np.sum(w[ok] * mu[ok] / -dmu[ok]))


def p1_dirichlet(nodes, tris, values):
    K, _ = assemble_p1(np.asarray(nodes, dtype=float), np.asarray(tris))
    return float(values @ (K @ values))


# 7-point degree-5 rule on the reference triangle
_TRI_A = (6 - math.sqrt(15)) / 21
_TRI_B = (6 + math.sqrt(15)) / 21
_TRI_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_TRI_A, _TRI_A, 1 - 2 * _TRI_A], [_TRI_A, 1 - 2 * _TRI_A, _TRI_A], [1 - 2 * _TRI_A, _TRI_A, _TRI_A],
    [_TRI_B, _TRI_B, 1 - 2 * _TRI_B], [_TRI_B, 1 - 2 * _TRI_B, _TRI_B], [1 - 2 * _TRI_B, _TRI_B, _TRI_B],
])
_TRI_W = np.array([9 / 40] + [(155 - math.sqrt(15)) / 1200] * 3 + [(155 + math.sqrt(15)) / 1200] * 3)


def domain_integral(nodes, tris, values, fn):
    """int fn(psi) over the mesh for the piecewise-linear interpolant of psi."""
    nodes = np.asarray(nodes, dtype=float)
    p = nodes[tris]
    area = 0.5 * np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    vals = np.asarray(values)[tris] @ _TRI_BARY.T  # (m, 7)
    return float(np.sum(area * (fn(vals) @ _TRI_W)))


def sector_integral(rf, fn, n_panels=2048):
    """int over S_{alpha,R} of fn(psi*) = int_0^{|S|} fn(psi*(m)) dm."""
    m, w = _gauss_panels(0.0, rf.sector.area, n_panels)
    return float(np.sum(w * fn(rf.of_measure(m))))


@dataclass
class NormReport:
    name: str
    original: float
    rearranged: float

    @property
    def rel_error(self):
        return abs(self.rearranged - self.original) / max(abs(self.original), 1e-300)


NORM_TESTS = {
    "identity": lambda x: x,
    "square": lambda x: x * x,
    "cube": lambda x: x**3,
    "sqrt": lambda x: np.sqrt(np.abs(x)),
}


def norm_identity(nodes, tris, values, rf, tests=NORM_TESTS):
    """Compare int F(psi) and int F(psi*) for each F in ``tests``."""
    return [NormReport(k, domain_integral(nodes, tris, values, f), sector_integral(rf, f))
            for k, f in tests.items()]


def equimeasurability_error(rf, n_r=4000):
    """max_t | |{psi* > t}| - mu(t) | over the profile thresholds, and the cell area bound.

    |{psi* > t}| is measured by counting radial cells (midpoint rule).
    """
    s = rf.sector
    edges = np.linspace(0.0, s.R, n_r + 1)
    cell = 0.5 * s.alpha * np.diff(edges**2)
    vals = rf.radial_values(0.5 * (edges[1:] + edges[:-1]))
    prof = rf.profile
    t = prof.thresholds[1:]
    measured = np.array([cell[vals > tt].sum() for tt in t])
    err = np.abs(measured - prof.mu(t))
    return float(err.max()), float(cell.max())


@dataclass
class GradientCheck:
    lhs: float
    rhs: float
    holds: bool


def gradient_inequality_check(nodes, tris, values, alpha, rel_tol=1e-6):
    """||grad psi*|| <= ||grad psi|| for the P1 interpolant, psi* on the equal-area sector."""
    prof = level_profile(nodes, tris, values)
    lhs = rearranged_dirichlet(prof, alpha)
    rhs = p1_dirichlet(nodes, tris, np.maximum(values, 0.0))
    return GradientCheck(lhs, rhs, lhs <= rhs * (1 + rel_tol))


# --------------------------------------------------------------------------- #
# perimeters of superlevel sets
# --------------------------------------------------------------------------- #

@dataclass
class PerimeterRow:
    t: float
    mu: float
    perim_h_original: float
    perim_h_star: float
    holds: bool


@dataclass
class PerimeterReport:
    rows: list
    alpha: float

    @property
    def fraction_holding(self):
        return sum(r.holds for r in self.rows) / max(len(self.rows), 1)

    def to_json(self, path, meta=None):
        out = {"alpha": self.alpha, "rows": [r.__dict__ for r in self.rows]}
        if meta:
            out["config"] = meta
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(out, fh, indent=2)
            fh.write("\n")


def free_boundary_length(p, func, t, h):
    """Length of {func = t} inside the quarter domain, away from v and gamma.

    Marching squares on a grid of spacing h over the bounding box; segments
    whose midpoint lies outside the domain or within h of v (x1 = 0) or of
    gamma are Neumann-boundary pieces and dropped.
    """
    x_max = p.a
    xs = np.arange(0.0, x_max + h, h)
    ys = np.arange(0.0, p.b + h, h)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    F = func(X, Y)
    total = 0.0
    for c in find_contours(F, t):
        # contour coordinates are fractional grid indices
        pts = np.stack([c[:, 0] * h, c[:, 1] * h], axis=1)
        seg = np.diff(pts, axis=0)
        mid = 0.5 * (pts[1:] + pts[:-1])
        g = gamma_boundary(p, mid[:, 0])
        gp = gamma_prime(p, mid[:, 0])
        dist_g = (g - mid[:, 1]) / np.sqrt(1 + gp * gp)
        keep = (mid[:, 0] > h) & (dist_g > h) & (mid[:, 1] >= 0)
        total += float(np.sum(np.hypot(seg[keep, 0], seg[keep, 1])))
    return total


def perimeter_inequality_check(p, func, t_grid, s, h=None, n_cells=40000):
    """For each t compare |d^h {psi > t}| in the quarter domain with alpha r(t) on the sector.

    mu(t) comes from the P1 profile of ``func`` on the quarter mesh; the
    sector's free boundary of {psi* > t} is the arc of radius r(t) = sqrt(2 mu / alpha).
    """
    mesh, vals = sample_on_quarter(p, func, n_cells)
    prof = level_profile(mesh.nodes, mesh.tris, vals)
    h = h or p.b / 400
    rows = []
    for t in t_grid:
        mu = float(prof.mu([t])[0])
        lhs = free_boundary_length(p, func, t, h)
        rhs = s.alpha * math.sqrt(2 * mu / s.alpha)
        rows.append(PerimeterRow(float(t), mu, lhs, rhs, lhs >= rhs))
    return PerimeterReport(rows, s.alpha)


# --------------------------------------------------------------------------- #
# test functions
# --------------------------------------------------------------------------- #

def smoothstep(z):
    z = np.clip(z, 0.0, 1.0)
    return z * z * z * (10 - 15 * z + 6 * z * z)


def swapped_profile(p):
    """cos(pi x1 / 2a) sin(pi x2 / 2b): the separable profile, zero on h instead of v."""
    return lambda x1, x2: np.cos(0.5 * math.pi * x1 / p.a) * np.sin(0.5 * math.pi * x2 / p.b)


def random_bumps(p, seed, n_bumps=4, margin=0.1):
    """Positive Gaussian bumps inside the quarter domain times a cutoff vanishing for x2 < margin b.

    Bump centres are drawn in {x1 < 2b, margin b < x2 < gamma(x1)} where the
    domain has most of its area.
    """
    rng = np.random.default_rng(seed)
    centres, widths, weights = [], [], []
    while len(centres) < n_bumps:
        x1 = rng.uniform(0, min(p.a, 2 * p.b))
        x2 = rng.uniform(0, p.b)
        if 2 * margin * p.b < x2 < gamma_boundary(p, x1):
            centres.append((x1, x2))
            widths.append(rng.uniform(0.15, 0.5) * p.b)
            weights.append(rng.uniform(0.5, 1.5))
    centres = np.array(centres)

    def f(x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = np.zeros(np.broadcast(x1, x2).shape)
        for (c1, c2), w, a in zip(centres, widths, weights):
            out += a * np.exp(-((x1 - c1) ** 2 + (x2 - c2) ** 2) / (2 * w * w))
        return out * smoothstep((x2 - margin * p.b) / (margin * p.b))

    return f


def corner_bump(p, width=None):
    """Radially decreasing bump centred on the wedge corner w = (0, b)."""
    width = width or 0.3 * p.b

    def f(x1, x2):
        return np.exp(-(np.asarray(x1) ** 2 + (np.asarray(x2) - p.b) ** 2) / (2 * width * width))

    return f
