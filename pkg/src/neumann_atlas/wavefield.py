"""Laplace eigenfunctions on the flat torus [0,1)^2.

Every field is a finite sum  sum_j A_j sin(k_j . x + phi_j)  with k_j = 2 pi n_j,
so values, gradients and Hessians are available in closed form at any point.
Grid sampling uses the angle-addition identity so an N x N grid costs a few
outer products per mode.

Eigenvalue convention: ``energy`` is the integer E = n1^2 + n2^2 and
``lam`` = 4 pi^2 E is the Laplace eigenvalue. Statistics quoted "at lambda=925"
refer to E.
"""
import math
from dataclasses import dataclass, field

import numpy as np


class ResolutionError(ValueError):
    """Grid too coarse for the highest lattice frequency present."""


@dataclass(frozen=True, order=True)
class LatticeMode:
    n1: int
    n2: int

    @property
    def energy(self):
        return self.n1 * self.n1 + self.n2 * self.n2


def enumerate_lattice(energy):
    """All integer (n1, n2) with n1^2 + n2^2 = energy, lexicographically sorted."""
    if energy < 1:
        raise ValueError("energy must be >= 1")
    r = math.isqrt(energy)
    modes = []
    for n1 in range(-r, r + 1):
        rest = energy - n1 * n1
        m = math.isqrt(rest)
        if m * m == rest:
            modes.extend({LatticeMode(n1, -m), LatticeMode(n1, m)})
    return sorted(modes)


def gaussian_box_muller(seed, count):
    """Standard normals from a Philox4x64 counter-based stream via Box-Muller.

    Returns ``count`` normals and one extra uniform in [0,1) drawn after them.
    """
    bitgen = np.random.Philox(seed)
    n_pairs = (count + 1) // 2
    u = np.random.Generator(bitgen).random(2 * n_pairs + 1)
    u1, u2 = u[0:2 * n_pairs:2], u[1:2 * n_pairs:2]
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    z = np.empty(2 * n_pairs)
    z[0::2] = radius * np.cos(2 * np.pi * u2)
    z[1::2] = radius * np.sin(2 * np.pi * u2)
    return z[:count], float(u[-1])


@dataclass(frozen=True)
class WaveSpec:
    energy: int
    modes: tuple
    coefficients: tuple
    phase: float = 0.0
    seed: int = None

    def __post_init__(self):
        if not self.modes:
            raise ValueError("modes list is empty")
        if len(self.modes) != len(self.coefficients):
            raise ValueError("one coefficient per mode required")
        for m in self.modes:
            if m.energy != self.energy:
                raise ValueError(f"mode {m} violates n1^2 + n2^2 = {self.energy}")

    @classmethod
    def random(cls, energy, seed):
        """Arithmetic random wave: i.i.d. N(0,1) amplitudes, one uniform phase."""
        modes = tuple(enumerate_lattice(energy))
        if not modes:
            raise ValueError(f"{energy} is not a sum of two squares")
        coeffs, u = gaussian_box_muller(seed, len(modes))
        return cls(energy, modes, tuple(float(c) for c in coeffs), 2 * np.pi * u, seed)

    @property
    def degeneracy(self):
        return len(enumerate_lattice(self.energy))

    @property
    def lam(self):
        return 4 * np.pi**2 * self.energy


@dataclass(frozen=True)
class Evaluator:
    """Closed form of sum_j amp_j sin(k_j . x + phase_j)."""

    k: np.ndarray  # (m, 2) wave vectors, already multiplied by 2 pi
    amp: np.ndarray
    phase: np.ndarray

    def _args(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)[..., None]
        x2 = np.asarray(x2, dtype=float)[..., None]
        return self.k[:, 0] * x1 + self.k[:, 1] * x2 + self.phase

    def value(self, x1, x2):
        return np.sin(self._args(x1, x2)) @ self.amp

    def gradient(self, x1, x2):
        c = np.cos(self._args(x1, x2)) * self.amp
        return np.stack([c @ self.k[:, 0], c @ self.k[:, 1]], axis=-1)

    def hessian(self, x1, x2):
        """Returns (..., 3) array of (psi_11, psi_12, psi_22)."""
        s = -np.sin(self._args(x1, x2)) * self.amp
        kx, ky = self.k[:, 0], self.k[:, 1]
        return np.stack([s @ (kx * kx), s @ (kx * ky), s @ (ky * ky)], axis=-1)

    def grid(self, n, derivative=0):
        """Sample on (i/n, j/n); derivative=0 values, 1 gradient (2,n,n)."""
        t = np.arange(n) / n
        out = np.zeros((2, n, n)) if derivative else np.zeros((n, n))
        for (k1, k2), a, ph in zip(self.k, self.amp, self.phase):
            a1 = k1 * t + ph
            a2 = k2 * t
            s1, c1, s2, c2 = np.sin(a1), np.cos(a1), np.sin(a2), np.cos(a2)
            if derivative:
                # cos(a1 + a2) = c1 c2 - s1 s2
                cc = a * (np.outer(c1, c2) - np.outer(s1, s2))
                out[0] += k1 * cc
                out[1] += k2 * cc
            else:
                out += a * (np.outer(s1, c2) + np.outer(c1, s2))
        return out


@dataclass(frozen=True)
class ScalarField:
    N: int
    values: np.ndarray = field(repr=False)
    lam: float
    evaluator: Evaluator = field(repr=False)
    energy: int = None
    seed: int = None

    @property
    def grid_step(self):
        return 1.0 / self.N


def _check_resolution(N, max_n):
    if N < 8:
        raise ResolutionError("N must be at least 8")
    if N < 8 * max_n:
        raise ResolutionError(f"N={N} cannot resolve frequency {max_n} (need N >= {8 * max_n})")


def evaluator_from_spec(spec):
    k = 2 * np.pi * np.array([[m.n1, m.n2] for m in spec.modes], dtype=float)
    amp = np.array(spec.coefficients, dtype=float)
    return Evaluator(k, amp, np.full(len(amp), float(spec.phase)))


def sample_random_wave(spec, N):
    """Sample sum_n a_n sin(2 pi n.x + theta) on an N x N grid."""
    _check_resolution(N, max(max(abs(m.n1), abs(m.n2)) for m in spec.modes))
    ev = evaluator_from_spec(spec)
    return ScalarField(N, ev.grid(N), spec.lam, ev, spec.energy, spec.seed)


def separable_evaluator(n1, n2):
    # 2 cos(u) cos(v) = sin(u + v + pi/2) + sin(u - v + pi/2)
    k = 2 * np.pi * np.array([[n1, n2], [n1, -n2]], dtype=float)
    return Evaluator(k, np.ones(2), np.full(2, np.pi / 2))


def sample_separable(n1, n2, N):
    """Sample 2 cos(2 pi n1 x1) cos(2 pi n2 x2); eigenvalue 4 pi^2 (n1^2 + n2^2)."""
    if n1 < 1 or n2 < 1:
        raise ValueError("n1, n2 must be >= 1")
    _check_resolution(N, max(n1, n2))
    ev = separable_evaluator(n1, n2)
    t = 2 * np.pi * np.arange(N) / N
    values = 2 * np.outer(np.cos(n1 * t), np.cos(n2 * t))
    e = n1 * n1 + n2 * n2
    return ScalarField(N, values, 4 * np.pi**2 * e, ev, e, None)


def five_point_laplacian(values, h):
    """Periodic 5-point discrete Laplacian."""
    return (np.roll(values, 1, 0) + np.roll(values, -1, 0) + np.roll(values, 1, 1)
            + np.roll(values, -1, 1) - 4 * values) / (h * h)


# --------------------------------------------------------------------------- #
# CSV dump: first record "N,lambda,seed", then N^2 records "i,j,value"
# --------------------------------------------------------------------------- #

def _fmt(x):
    return format(float(x), ".17g")


def save_field_csv(fld, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        seed = "" if fld.seed is None else str(int(fld.seed))
        fh.write(f"{fld.N},{_fmt(fld.lam)},{seed}\n")
        for i in range(fld.N):
            row = fld.values[i]
            fh.write("".join(f"{i},{j},{_fmt(v)}\n" for j, v in enumerate(row)))


@dataclass(frozen=True)
class FieldDump:
    N: int
    lam: float
    seed: int
    values: np.ndarray = field(repr=False)


def load_field_csv(path):
    with open(path, encoding="utf-8") as fh:
        n_s, lam_s, seed_s = fh.readline().rstrip("\n").split(",")
        n = int(n_s)
        data = np.loadtxt(fh, delimiter=",", dtype=float, ndmin=2)
    values = np.empty((n, n))
    values[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2]
    return FieldDump(n, float(lam_s), int(seed_s) if seed_s else None, values)
