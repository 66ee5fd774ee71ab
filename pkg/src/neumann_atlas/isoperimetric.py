"""Isoperimetric functionals on the quarter domain and the circular-arc minimizers.

For a set A with non-Neumann boundary length L = |d^h A| and area |A|:

    F(A) = L^2 / (2 |A|),    C(A) = (F(A) / L)^2 / 4 = L^2 / (16 |A|^2).

The minimizers of L at fixed area in the extended domain (quarter domain plus
the lower half plane, bounded by v and by gamma continued along the x1-axis)
are circular arcs meeting v and gamma at right angles. Orthogonality to v puts
the centre on v; orthogonality to gamma at x_p puts it on the tangent of gamma
there, so the arc is fixed by x_p alone:

    centre (0, gamma(x_p) - gamma'(x_p) x_p),   radius x_p sqrt(1 + gamma'(x_p)^2).

Inside the quarter domain itself this family is valid until the arc reaches
the corner v ∩ h. Past that point the sweep continues with arcs tangent to h
and orthogonal to gamma, the part of h left of the tangency point counting as
non-Neumann boundary.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import brentq

from .stardomain import gamma_boundary, gamma_prime, quarter_area, _quarter_breakpoints

PI_4 = 0.25 * math.pi


class NoArcFound(RuntimeError):
    pass


def F_functional(boundary_h_length, area):
    if not area > 0:
        raise ValueError("area must be positive")
    return boundary_h_length**2 / (2.0 * area)


def cheeger_functional(boundary_h_length, area):
    if not (area > 0 and boundary_h_length > 0):
        raise ValueError("area and length must be positive")
    F = F_functional(boundary_h_length, area)
    return (F / boundary_h_length) ** 2 / 4.0


# --------------------------------------------------------------------------- #
# boundary curves
# --------------------------------------------------------------------------- #

class ExactBoundary:
    """gamma_{a,b} on [0, a]."""

    def __init__(self, p):
        self.p = p
        self.a, self.b = p.a, p.b
        self._pts = _quarter_breakpoints(p)

    def value(self, x):
        return gamma_boundary(self.p, x)

    def slope(self, x):
        return gamma_prime(self.p, x)

    def breakpoints(self, lo, hi):
        return [q for q in (self._pts or []) if lo < q < hi] or None

    def integral(self, x):
        """int_0^x gamma."""
        val, _ = integrate.quad(self.value, 0.0, x, points=self.breakpoints(0.0, x),
                                epsabs=0.0, epsrel=1e-12, limit=400)
        return val

    def total_area(self):
        return quarter_area(self.p)


class GaussianBoundary(ExactBoundary):
    """Small-b profile (2b/pi) arcsin(exp(-(pi^2/8)(x/b)^2)) from the cos-power limit."""

    def value(self, x):
        u = 0.125 * (math.pi * np.asarray(x, dtype=float) / self.b) ** 2
        with np.errstate(under="ignore"):
            out = 2 * self.b / math.pi * np.arcsin(np.exp(-u))
        return out if out.ndim else float(out)

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        u = 0.125 * (math.pi * x / self.b) ** 2
        with np.errstate(divide="ignore", invalid="ignore", under="ignore", over="ignore"):
            # exp(-u) / sqrt(1 - exp(-2u)) = 1 / sqrt(exp(2u) - 1)
            d = -(2 * self.b / math.pi) * (0.25 * math.pi**2 * x / self.b**2) / np.sqrt(np.expm1(2 * u))
        d = np.where(x < 1e-300, -1.0, d)
        d = np.where(np.isfinite(d), d, 0.0)
        return d if d.ndim else float(d)

    def total_area(self):
        return self.integral(self.a)


def boundary_curve(p, mode="exact"):
    if mode == "exact":
        return ExactBoundary(p)
    if mode == "gaussian":
        return GaussianBoundary(p)
    raise ValueError("mode must be 'exact' or 'gaussian'")


# --------------------------------------------------------------------------- #
# arcs
# --------------------------------------------------------------------------- #

@dataclass
class ArcSet:
    params: object
    eta: float
    center: tuple
    radius: float
    arc: np.ndarray
    attach_points: tuple
    boundary_length: float
    phi: float
    phase: int = 1

    @property
    def F(self):
        return F_functional(self.boundary_length, self.eta)

    @property
    def C(self):
        return cheeger_functional(self.boundary_length, self.eta)


def _arc_geometry(curve, xp):
    """Centre height, radius and opening angle of the arc attached at xp."""
    g, gp = float(curve.value(xp)), float(curve.slope(xp))
    yc = g - gp * xp
    r = xp * math.sqrt(1 + gp * gp)
    return yc, r, 0.5 * math.pi + math.atan(gp)


def _chord_integral(r, x0, x1):
    """int_x0^x1 sqrt(r^2 - x^2) dx for 0 <= x0 <= x1 <= r."""
    if r <= 0.0:
        return 0.0

    def prim(x):
        x = min(x, r)
        return 0.5 * (x * math.sqrt(max(r * r - x * x, 0.0)) + r * r * math.asin(x / r))
    return prim(x1) - prim(x0)


def _phase1_area(curve, xp):
    yc, r, _ = _arc_geometry(curve, xp)
    # area between gamma and the lower arc y = yc - sqrt(r^2 - x^2), 0 < x < xp;
    # the arc part in closed form (its integrand is singular at x = r)
    val, _ = integrate.quad(lambda x: curve.value(x) - yc, 0.0, xp, points=curve.breakpoints(0.0, xp),
                            epsabs=1e-13 * curve.b * xp, epsrel=1e-12, limit=400)
    return val + _chord_integral(r, 0.0, xp)


def _phase2_geometry(curve, xp):
    """Arc tangent to h at (xq, 0) and orthogonal to gamma at xp: (xq, r, opening angle)."""
    g, gp = float(curve.value(xp)), float(curve.slope(xp))
    s = -g / (gp + math.sqrt(1 + gp * gp))
    r = g + s * gp
    return xp + s, r, 0.5 * math.pi + math.atan(gp)


def _phase2_area(curve, xp):
    xq, r, _ = _phase2_geometry(curve, xp)
    # gamma minus the lower arc y = r - sqrt(r^2 - (x - xq)^2) on (xq, xp), gamma alone on (0, xq)
    val = curve.integral(xp) - r * (xp - xq)
    return val + _chord_integral(r, 0.0, xp - xq)


def _arc_points(center, r, th0, th1, n):
    th = np.linspace(th0, th1, n)
    return np.stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)], axis=1)


def _solve_xp(fn, eta, lo, hi):
    if lo is None:
        # area ~ (pi/4) x_p^2 at the wedge; start below that, away from roundoff-dominated tiny x_p
        lo = min(0.5 * math.sqrt(eta), 0.5 * hi)
        while fn(lo) >= eta and lo > 1e-300:
            lo *= 0.1
    f_lo, f_hi = fn(lo) - eta, fn(hi) - eta
    if not f_lo < 0 < f_hi:
        raise NoArcFound(f"area {eta:.6g} not bracketed on [{lo:.3g}, {hi:.3g}]")
    try:
        return brentq(lambda x: fn(x) - eta, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (RuntimeError, ValueError) as exc:
        raise NoArcFound(str(exc)) from exc


def arc_minimizer(p, eta, mode="exact", n_arc=20001, curve=None):
    """Circular arc from v to gamma, orthogonal to both, cutting off area eta at the wedge corner."""
    curve = curve or boundary_curve(p, mode)
    total = curve.total_area()
    if not 0 < eta < total:
        raise NoArcFound(f"eta must lie in (0, {total})")
    xp = _solve_xp(lambda x: _phase1_area(curve, x), eta, None, curve.a * (1 - 1e-12))
    yc, r, phi = _arc_geometry(curve, xp)
    arc = _arc_points((0.0, yc), r, -0.5 * math.pi, phi - 0.5 * math.pi, n_arc)
    gp = (xp, float(curve.value(xp)))
    return ArcSet(p, float(eta), (0.0, yc), r, arc, ((0.0, yc - r), gp), r * phi, phi, 1)


def transition_point(p, mode="exact", curve=None):
    """Abscissa and area of the largest single arc inside the quarter domain (arc through v ∩ h)."""
    curve = curve or boundary_curve(p, mode)

    def low_end(x):
        yc, r, _ = _arc_geometry(curve, x)
        return yc - r
    xp = brentq(low_end, 1e-9 * curve.a, curve.a * (1 - 1e-12), xtol=1e-15)
    return xp, _phase1_area(curve, xp)


def tangent_arc_set(p, eta, mode="exact", n_arc=20001, curve=None, xp_transition=None):
    """Past the transition: arc tangent to h, orthogonal to gamma, plus the segment of h to its left."""
    curve = curve or boundary_curve(p, mode)
    if xp_transition is None:
        xp_transition, _ = transition_point(p, curve=curve)
    xp = _solve_xp(lambda x: _phase2_area(curve, x), eta, xp_transition, curve.a * (1 - 1e-9))
    xq, r, phi = _phase2_geometry(curve, xp)
    arc = _arc_points((xq, r), r, -0.5 * math.pi, phi - 0.5 * math.pi, n_arc)
    return ArcSet(p, float(eta), (xq, r), r, arc, ((xq, 0.0), (xp, float(curve.value(xp)))),
                  xq + r * phi, phi, 2)


# --------------------------------------------------------------------------- #
# verification helpers
# --------------------------------------------------------------------------- #

def attachment_residuals(arc_set, curve):
    """Angles (radians) by which the arc misses orthogonality at its two ends.

    At the first end the reference side is v (phase 1) or h, where the arc
    should be tangent (phase 2); at the second end it is gamma.
    """
    c = np.asarray(arc_set.center)
    p0 = np.asarray(arc_set.attach_points[0])
    p1 = np.asarray(arc_set.attach_points[1])
    r0 = (p0 - c) / np.linalg.norm(p0 - c)
    # the radius must be vertical: along v, or normal to h
    res0 = math.asin(min(1.0, abs(r0[0])))
    t = np.array([1.0, float(curve.slope(p1[0]))])
    t /= np.linalg.norm(t)
    r1 = (p1 - c) / np.linalg.norm(p1 - c)
    res1 = math.asin(min(1.0, abs(r1[0] * t[1] - r1[1] * t[0])))
    return res0, res1


def closed_curve(arc_set, curve, n_gamma=20001):
    """Boundary of the set as a closed polygon: arc, gamma back to w, then v (and h) down."""
    xp = arc_set.attach_points[1][0]
    xs = np.linspace(xp, 0.0, n_gamma)
    top = np.stack([xs, curve.value(xs)], axis=1)
    pieces = [arc_set.arc, top[1:]]
    if arc_set.phase == 2:
        # down v to the origin, along h to the tangency point
        xq = arc_set.attach_points[0][0]
        pieces.append(np.array([[0.0, 0.0], [xq, 0.0]]))
    return np.vstack(pieces)


def shoelace_area(poly):
    # centre first: for small sets far from the origin the raw sums cancel badly
    q = poly - poly.mean(axis=0)
    x, y = q[:, 0], q[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def contains_corner(arc_set, curve):
    """True when the wedge corner w = (0, b) lies in the closed disc of the arc (phase 1)."""
    c = np.asarray(arc_set.center)
    return float(np.hypot(c[0], curve.b - c[1])) <= arc_set.radius * (1 + 1e-12)


# --------------------------------------------------------------------------- #
# sweeps
# --------------------------------------------------------------------------- #

@dataclass
class CheegerRow:
    eta: float
    F: float
    C: float
    radius: float
    phi: float
    phase: int


@dataclass
class CheegerCurve:
    rows: list
    transition_eta: float
    total_area: float

    @property
    def C(self):
        return np.array([r.C for r in self.rows])

    @property
    def F(self):
        return np.array([r.F for r in self.rows])

    @property
    def eta(self):
        return np.array([r.eta for r in self.rows])

    @property
    def argmin(self):
        return int(np.argmin(self.C))

    @property
    def eta_min(self):
        return self.rows[self.argmin].eta

    def single_interior_minimum(self):
        """C strictly decreasing up to its minimum and strictly increasing after, minimum not at an end."""
        c = self.C
        k = self.argmin
        return 0 < k < len(c) - 1 and bool(np.all(np.diff(c[:k + 1]) < 0) and np.all(np.diff(c[k:]) > 0))

    def to_csv(self, path, header_lines=()):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eta", "F", "C", "radius", "phi"])
            for r in self.rows:
                w.writerow([format(v, ".17g") for v in (r.eta, r.F, r.C, r.radius, r.phi)])


def arc_family(p, eta_grid, mode="exact"):
    """Arc minimizers in the extended domain for each eta (no transition)."""
    curve = boundary_curve(p, mode)
    return [arc_minimizer(p, e, curve=curve) for e in eta_grid]


def cheeger_curve(p, eta_grid, mode="exact"):
    """F and C along the minimizer family inside the quarter domain.

    Single arcs up to the transition area, arcs tangent to h beyond it.
    """
    curve = boundary_curve(p, mode)
    xp_t, eta_t = transition_point(p, curve=curve)
    rows = []
    for e in eta_grid:
        s = arc_minimizer(p, e, curve=curve) if e <= eta_t else \
            tangent_arc_set(p, e, curve=curve, xp_transition=xp_t)
        rows.append(CheegerRow(float(e), s.F, s.C, s.radius, s.phi, s.phase))
    return CheegerCurve(rows, eta_t, curve.total_area())


def length_derivative_check(p, eta, rel_step=1e-4, mode="exact"):
    """Central difference of L^2 in eta against 2 phi(eta); returns (fd, 2 phi)."""
    curve = boundary_curve(p, mode)
    d = rel_step * eta
    lo = arc_minimizer(p, eta - d, curve=curve)
    hi = arc_minimizer(p, eta + d, curve=curve)
    mid = arc_minimizer(p, eta, curve=curve)
    fd = (hi.boundary_length**2 - lo.boundary_length**2) / (2 * d)
    return fd, 2 * mid.phi


# --------------------------------------------------------------------------- #
# convexity
# --------------------------------------------------------------------------- #

def convexity_check(p, n=10_000, tol=1e-10):
    """Second differences of gamma on [0, a] (n points) are all >= -tol."""
    x = np.linspace(0.0, p.a, n)
    g = gamma_boundary(p, x)
    return bool(np.all(np.diff(g, 2) >= -tol))


def power_family_margin(alpha, n=10_001):
    """min over y in [0, 1] of alpha (1 - y^2) - (1 - y^(2 alpha))."""
    y = np.linspace(0.0, 1.0, n)
    return float(np.min(alpha * (1 - y * y) - (1 - y ** (2 * alpha))))
