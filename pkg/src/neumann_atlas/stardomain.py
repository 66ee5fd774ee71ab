"""Closed-form geometry of the star-like Neumann domain of the separable
eigenfunction 2 sin(pi x1 / 2a) cos(pi x2 / 2b).

The domain is {|x2| < gamma(x1), |x1| < a}; its first quadrant piece is the
"quarter domain" used throughout the package.
"""
import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import special


class FitError(RuntimeError):
    """A power-law fit to the boundary did not reach the requested accuracy."""


@dataclass(frozen=True)
class StarParams:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        if self.b > self.a:
            # b > a is the same domain rotated by pi/2
            raise ValueError("expected b <= a; swap the parameters for b > a")

    @property
    def beta(self):
        """Cusp exponent (a/b)^2."""
        return (self.a / self.b) ** 2

    @property
    def ratio(self):
        return self.a / self.b

    @classmethod
    def from_modes(cls, n1, n2):
        """Parameters of the separable mode (n1, n2): a = 1/(4 n1), b = 1/(4 n2)."""
        a, b = 1.0 / (4 * n1), 1.0 / (4 * n2)
        return cls(max(a, b), min(a, b))


@dataclass(frozen=True)
class SectorParams:
    alpha: float
    R: float

    def __post_init__(self):
        if not (0 < self.alpha <= 2 * math.pi):
            raise ValueError("opening angle must lie in (0, 2pi]")
        if not self.R > 0:
            raise ValueError("radius must be positive")

    @property
    def area(self):
        return 0.5 * self.alpha * self.R**2


@dataclass(frozen=True)
class Constants:
    j0: float
    j1p: float
    gamma_area: float
    alpha_min: float
    alpha_max: float = math.pi / 4

    @property
    def rho_ground_bound(self):
        """Upper bound j1'/2 on rho for a Neumann ground state."""
        return self.j1p / 2

    @property
    def rho_excited_bound(self):
        """Upper bound j1'/sqrt(2) on rho for a first excited state."""
        return self.j1p / math.sqrt(2)


def _gamma_area_integrand(x):
    return math.asin(math.exp(-x * x))


def gamma_area_constant():
    """(4 sqrt 2 / pi^2) * integral_0^inf arcsin(exp(-x^2)) dx, about 0.6080.

    This is the limit of quarter_area(a, b) / b^2 as b -> 0.
    """
    val, _ = integrate.quad(_gamma_area_integrand, 0.0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 4 * math.sqrt(2) / math.pi**2 * val


@lru_cache(maxsize=1)
def constants():
    j0 = special.first_zero_j0()
    j1p = special.first_zero_j1_prime()
    g = gamma_area_constant()
    return Constants(j0=j0, j1p=j1p, gamma_area=g, alpha_min=g * math.pi**2 / (2 * j0**2))


# --------------------------------------------------------------------------- #
# boundary curve
# --------------------------------------------------------------------------- #

def _log_cos(t):
    # log(cos t), accurate also when t is tiny
    t = np.asarray(t, dtype=float)
    return np.log1p(-2.0 * np.sin(0.5 * t) ** 2)


def _log_cos_plus_half_sq(t):
    """log(cos t) + t^2/2 without cancellation; always <= 0 for |t| < pi/2."""
    t = np.asarray(t, dtype=float)
    t2 = t * t
    # Taylor series of log cos t + t^2/2; all coefficients negative
    series = -t2 * t2 * (1 / 12 + t2 * (1 / 45 + t2 * (17 / 2520 + t2 * (31 / 14175 + t2 * 691 / 935550))))
    with np.errstate(divide="ignore"):
        direct = _log_cos(t) + 0.5 * t2
    return np.where(np.abs(t) < 0.2, series, direct)


def gamma_boundary(p, x):
    """Upper boundary gamma_{a,b}(x) = (2b/pi) arcsin(cos(pi x / 2a)^((a/b)^2)).

    Vectorised; zero outside [-a, a].
    """
    x = np.abs(np.asarray(x, dtype=float))
    inside = x < p.a
    t = np.where(inside, 0.5 * math.pi * x / p.a, 0.0)
    with np.errstate(divide="ignore", under="ignore"):
        pw = np.exp(p.beta * _log_cos(t))
    out = np.where(inside, 2 * p.b / math.pi * np.arcsin(np.minimum(pw, 1.0)), 0.0)
    return out if out.ndim else float(out)


def gamma_prime(p, x):
    """Derivative of gamma_{a,b} for 0 <= x <= a (slope -1 at x = 0)."""
    x = np.asarray(x, dtype=float)
    t = 0.5 * math.pi * np.clip(x, 0.0, p.a) / p.a
    with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
        lc = _log_cos(t)
        one_minus = -np.expm1(2 * p.beta * lc)  # 1 - cos^(2 beta)
        num = p.beta * np.exp((p.beta - 1) * lc) * np.sin(t) * (0.5 * math.pi / p.a)
        d = -(2 * p.b / math.pi) * num / np.sqrt(one_minus)
    d = np.where(t < 1e-300, -1.0, d)
    d = np.where(np.isfinite(d), d, 0.0)
    return d if d.ndim else float(d)


def log_gamma_boundary(p, x):
    """log gamma_{a,b}(x) that stays finite where gamma underflows (near the cusp)."""
    x = np.abs(np.asarray(x, dtype=float))
    t = 0.5 * math.pi * x / p.a
    with np.errstate(divide="ignore"):
        ly = p.beta * _log_cos(t)
    small = ly < -30.0
    with np.errstate(under="ignore"):
        big = np.log(np.arcsin(np.exp(np.where(small, 0.0, ly))))
    out = math.log(2 * p.b / math.pi) + np.where(small, ly, big)
    return out if out.ndim else float(out)


def flow_line(p, x1, g):
    """Gradient flow line x2(x1) through the quarter domain labelled by g in [-pi/2, pi/2].

    g = +-pi/2 reproduces the boundary +-gamma, g = 0 the symmetry axis x2 = 0.
    """
    x1 = np.abs(np.asarray(x1, dtype=float))
    t = 0.5 * math.pi * np.minimum(x1, p.a) / p.a
    with np.errstate(divide="ignore", under="ignore"):
        pw = np.exp(p.beta * _log_cos(t))
    return 2 * p.b / math.pi * np.arcsin(math.sin(g) * pw)


def lambda_ab(p):
    """Eigenvalue (pi^2/4)(a^-2 + b^-2) of the separable mode on the star domain."""
    return 0.25 * math.pi**2 * (p.a**-2 + p.b**-2)


def _quarter_breakpoints(p):
    # the integrand lives on a scale ~b near x = 0
    pts = [k * p.b for k in (0.5, 1.0, 2.0, 4.0, 8.0) if k * p.b < p.a]
    return pts or None


def quarter_area(p):
    """Area of the quarter domain, integral_0^a gamma_{a,b}(x) dx."""
    val, _ = integrate.quad(
        lambda x: gamma_boundary(p, x), 0.0, p.a,
        points=_quarter_breakpoints(p), epsabs=0.0, epsrel=1e-11, limit=400,
    )
    return val


def quarter_arclength(p):
    """Length of the boundary arc gamma_{a,b} over [0, a]."""
    val, _ = integrate.quad(
        lambda x: math.hypot(1.0, gamma_prime(p, x)), 0.0, p.a,
        points=_quarter_breakpoints(p), epsabs=0.0, epsrel=1e-11, limit=400,
    )
    return val


def star_area(p):
    return 4.0 * quarter_area(p)


def star_perimeter(p):
    return 4.0 * quarter_arclength(p)


def lens_area(p):
    """Lens-domain area as the complement of the star domain in its 2a x 2b tile."""
    return 4.0 * p.a * p.b - star_area(p)


def rho_star_lens(p):
    """rho = A sqrt(lambda) / l for the star- and lens-like domains sharing (a, b).

    Both domains are bounded by four congruent copies of gamma, so their
    perimeters coincide and rho_star < rho_lens iff the lens is larger.
    """
    perim = star_perimeter(p)
    root_lam = math.sqrt(lambda_ab(p))
    rho_s = star_area(p) * root_lam / perim
    rho_l = lens_area(p) * root_lam / perim
    # a = b: star and lens are congruent squares
    strict = p.b < p.a * (1 - 1e-12)
    if (strict and not rho_s < rho_l) or rho_s > rho_l * (1 + 1e-12):
        raise AssertionError(f"rho_star={rho_s} not below rho_lens={rho_l}")
    return rho_s, rho_l


# --------------------------------------------------------------------------- #
# asymptotics
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class AsymptoticsReport:
    wedge_slope: float
    wedge_residual: float
    cusp_exponent: float
    cusp_residual: float
    expected_exponent: float


def boundary_asymptotics_check(p, wedge_window=1e-3, tol=1e-6):
    """Fit gamma ~ b - x at the wedge and gamma(a - x) ~ C x^e at the cusp.

    Raises FitError if either least-squares fit leaves a residual larger than
    ``tol`` (absolute for the wedge, in log space relative to the span for the cusp).
    """
    xs = np.linspace(wedge_window / 50, wedge_window, 50) * p.a
    slope, icpt = np.polyfit(xs, gamma_boundary(p, xs), 1)
    wedge_res = float(np.max(np.abs(gamma_boundary(p, xs) - (slope * xs + icpt)))) / p.b

    # keep beta * t^2 small so the leading power dominates
    x_hi = min(1e-2, 0.02 / math.sqrt(p.beta)) * p.a
    xc = np.geomspace(x_hi * 1e-2, x_hi, 40)
    lx, ly = np.log(xc), log_gamma_boundary(p, p.a - xc)
    expo, c0 = np.polyfit(lx, ly, 1)
    cusp_res = float(np.max(np.abs(ly - (expo * lx + c0)))) / max(1.0, abs(ly[-1] - ly[0]))
    if wedge_res > tol or cusp_res > 10 * tol * max(1.0, p.beta):
        raise FitError(f"poor power-law fit: wedge {wedge_res:.2e}, cusp {cusp_res:.2e}")
    return AsymptoticsReport(float(slope), wedge_res, float(expo), cusp_res, p.beta)


def cos_power_remainder(p, x):
    """R_b(x) in cos(pi x/2a)^((a/b)^2) = exp(-(pi^2/8)(x/b)^2) (1 - R_b(x)).

    Evaluated without cancellation; positive and increasing on (0, a).
    """
    t = 0.5 * math.pi * np.asarray(x, dtype=float) / p.a
    out = -np.expm1(p.beta * _log_cos_plus_half_sq(t))
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------- #
# reference sector
# --------------------------------------------------------------------------- #

def sector_ground_state(s):
    """Ground state of the sector with Dirichlet rim and Neumann radial sides.

    Returns ``(j0^2 / R^2, profile)`` with ``profile(r) = J0(r j0 / R)``.
    """
    j0 = constants().j0

    def profile(r):
        return special.j0(np.asarray(r, dtype=float) * j0 / s.R)

    return j0**2 / s.R**2, profile


def reference_sector(p, alpha):
    """Sector of opening ``alpha`` with the same area as the quarter domain."""
    if not 0 < alpha <= 2 * math.pi:
        raise ValueError("alpha must lie in (0, 2pi]")
    return SectorParams(alpha, math.sqrt(2 * quarter_area(p) / alpha))


@dataclass(frozen=True)
class AdmissibilityWindow:
    alpha_lo: float
    alpha_hi: float
    feasible: bool
    alpha_best: float
    margin: float
    alphas: np.ndarray = field(repr=False)
    margins: np.ndarray = field(repr=False)


def admissibility_window(p, n_alpha=64, eps_fraction=1e-6):
    """Check the sector eigenvalue margin lambda_{alpha,R(alpha)} + eps0 <= lambda_{a,b}.

    ``alpha`` runs over ``n_alpha`` points of (alpha_min, pi/4), clustered
    geometrically at alpha_min where the sector eigenvalue is smallest. The
    margin reported is lambda_{a,b} - eps0 - lambda_sector.
    """
    c = constants()
    lo, hi = c.alpha_min, c.alpha_max
    k = np.arange(n_alpha)
    alphas = lo + (hi - lo) * np.geomspace(1e-9, 1.0, n_alpha + 1)[k]
    lam = lambda_ab(p)
    area = quarter_area(p)
    # lambda of the equal-area sector: j0^2 / R^2 = j0^2 alpha / (2 |quarter|)
    lam_sector = c.j0**2 * alphas / (2 * area)
    margins = lam - eps_fraction * lam - lam_sector
    i = int(np.argmax(margins))
    return AdmissibilityWindow(lo, hi, bool(margins[i] > 0), float(alphas[i]), float(margins[i]), alphas, margins)


def ratio_sweep(ratios, a=1.0):
    """rho and admissibility along b/a = ``ratios`` (each in (0, 1])."""
    rows = []
    for r in ratios:
        p = StarParams(a, a * r)
        rho_s, rho_l = rho_star_lens(p)
        win = admissibility_window(p)
        rows.append((p.a, p.b, p.b / p.a, rho_s, rho_l, win.feasible, win.alpha_best, win.margin))
    return rows


def export_ratio_sweep(rows, path, header_lines=()):
    """CSV ``a,b,ratio,rho_star,rho_lens,feasible,alpha_best,margin``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for h in header_lines:
            fh.write(f"# {h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b", "ratio", "rho_star", "rho_lens", "feasible", "alpha_best", "margin"])
        for row in rows:
            w.writerow([v if isinstance(v, bool) else format(float(v), ".17g") for v in row])
