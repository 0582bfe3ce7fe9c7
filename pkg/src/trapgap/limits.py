"""Closed-form gap algebra.

Forward map from trap design constants ``(d, b)`` to the limit gap endpoints
``(sigma, mu)``, its explicit inverse, and the helpers around them: the
hole-radius law, the rank-structured matrix whose inverse eigenvalues are the
``mu`` roots, and the map to Maxwell (frequency) gaps.

Everything here is plain double-precision algebra on short vectors
(``m <= 64``) and is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import (
    InterlacingFailure,
    NoSolution,
    NonMonotoneSigma,
    NotInG,
    OrderingViolation,
    RootCountMismatch,
    SingularM,
    TrapGapError,
)

# Dirichlet energy of the unit flat disc in R^3 (checked against a BEM oracle
# in the test suite).
KAPPA_3D = 8.0

MAX_TRAPS = 64
SIGMA_SEPARATION = 1e-9
NEWTON_RTOL = 1e-13
RHO_RESIDUAL_TOL = 1e-10


class PrecisionLoss(TrapGapError, ArithmeticError):
    pass


def _as_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def default_kappa(n: int) -> float | None:
    if n == 3:
        return KAPPA_3D
    return None


@dataclass(frozen=True)
class DesignParams:
    """Trap design: hole constants ``d`` and trap volumes ``b`` in dimension ``n``."""

    n: int
    d: tuple[float, ...]
    b: tuple[float, ...]
    kappa: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "d", _as_tuple(self.d))
        object.__setattr__(self, "b", _as_tuple(self.b))
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if self.kappa is None:
            object.__setattr__(self, "kappa", default_kappa(self.n))
        if self.n >= 3:
            if self.kappa is None:
                raise ValueError(f"kappa must be supplied for n={self.n}")
            if not self.kappa > 0:
                raise ValueError(f"kappa must be positive, got {self.kappa!r}")
            object.__setattr__(self, "kappa", float(self.kappa))
        if len(self.d) != len(self.b):
            raise ValueError("d and b must have the same length")
        if len(self.d) > MAX_TRAPS:
            raise ValueError(f"at most {MAX_TRAPS} traps are supported")
        if any(not v > 0 for v in self.d):
            raise ValueError(f"all d_j must be positive: {self.d}")
        if any(not v > 0 for v in self.b):
            raise ValueError(f"all b_j must be positive: {self.b}")
        if not math.fsum(self.b) < 1:
            raise ValueError(f"trap volumes must sum to less than 1: {self.b}")

    @property
    def m(self) -> int:
        return len(self.b)

    def to_dict(self) -> dict:
        return {"n": self.n, "kappa": self.kappa, "d": list(self.d), "b": list(self.b)}

    @classmethod
    def from_dict(cls, doc: dict) -> "DesignParams":
        return cls(n=doc["n"], d=doc["d"], b=doc["b"], kappa=doc.get("kappa"))


def _interlacing_violation(sigma: Sequence[float], mu: Sequence[float]):
    """Return (index, text) of the first failing inequality of the interlaced chain."""
    chain = []
    for j in range(len(sigma)):
        chain.append((f"sigma_{j + 1}", sigma[j]))
        chain.append((f"mu_{j + 1}", mu[j]))
    if not sigma[0] > 0:
        return 0, "0 < sigma_1"
    for i in range(len(chain) - 1):
        (na, va), (nb, vb) = chain[i], chain[i + 1]
        if not va < vb:
            return i + 1, f"{na} < {nb}"
    return None


@dataclass(frozen=True)
class LimitSpectrum:
    """Limit gap endpoints; construction enforces strict interlacing."""

    sigma: tuple[float, ...]
    mu: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "sigma", _as_tuple(self.sigma))
        object.__setattr__(self, "mu", _as_tuple(self.mu))
        if len(self.sigma) != len(self.mu) or not self.sigma:
            raise ValueError("sigma and mu must be non-empty and of equal length")
        if len(self.sigma) > MAX_TRAPS:
            raise ValueError(f"at most {MAX_TRAPS} gaps are supported")
        bad = _interlacing_violation(self.sigma, self.mu)
        if bad is not None:
            raise NotInG(*bad)

    @property
    def m(self) -> int:
        return len(self.sigma)

    @property
    def gaps(self) -> list[tuple[float, float]]:
        return list(zip(self.sigma, self.mu))

    def to_dict(self) -> dict:
        return {"sigma": list(self.sigma), "mu": list(self.mu)}

    @classmethod
    def from_dict(cls, doc: dict) -> "LimitSpectrum":
        return cls(sigma=doc["sigma"], mu=doc["mu"])


@dataclass(frozen=True)
class GapTargets:
    intervals: tuple[tuple[float, float], ...]
    L: float

    def __post_init__(self):
        object.__setattr__(
            self, "intervals", tuple((float(a), float(b)) for a, b in self.intervals)
        )
        object.__setattr__(self, "L", float(self.L))

    @property
    def m(self) -> int:
        return len(self.intervals)

    def to_spectrum(self) -> LimitSpectrum:
        validate_targets(self)
        return LimitSpectrum([a for a, _ in self.intervals], [b for _, b in self.intervals])

    def to_dict(self) -> dict:
        return {"targets": [list(iv) for iv in self.intervals], "L": self.L}

    @classmethod
    def from_dict(cls, doc: dict) -> "GapTargets":
        return cls(intervals=[tuple(iv) for iv in doc["targets"]], L=doc["L"])


@dataclass(frozen=True)
class SecularCoefficients:
    """Coefficients ``A_0..A_m`` of ``sum_k A_k lambda**(m-k)`` (highest power first)."""

    A: tuple[float, ...] = field(default_factory=tuple)

    def __call__(self, lam):
        return np.polyval(np.asarray(self.A), lam)


def validate_targets(targets: GapTargets) -> GapTargets:
    """Check ``0 < a_1 < b_1 < a_2 < ... < b_m < L``; raise on the first failure."""
    if targets.m < 1:
        raise ValueError("at least one target interval is required")
    chain = [("0", 0.0)]
    for j, (a, b) in enumerate(targets.intervals, start=1):
        chain += [(f"alpha_{j}", a), (f"beta_{j}", b)]
    chain.append(("L", targets.L))
    for i in range(len(chain) - 1):
        (na, va), (nb, vb) = chain[i], chain[i + 1]
        if not va < vb:
            raise OrderingViolation(i, f"{na} < {nb}")
    return targets


def sigma_from_design(p: DesignParams) -> tuple[float, ...]:
    d = np.asarray(p.d)
    b = np.asarray(p.b)
    if p.n == 2:
        sigma = math.pi * d / (2.0 * b)
    else:
        sigma = p.kappa * d ** (p.n - 2) / (4.0 * b)
    check_sigma(sigma)
    return tuple(float(s) for s in sigma)


def check_sigma(sigma) -> None:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size and not sigma[0] > 0:
        raise NonMonotoneSigma(0, sigma)
    for j in range(sigma.size - 1):
        if not sigma[j + 1] - sigma[j] >= SIGMA_SEPARATION * abs(sigma[j + 1]):
            raise NonMonotoneSigma(j, sigma)


def _check_volumes(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0) or not math.fsum(b) < 1:
        raise ValueError(f"volumes must be positive with sum < 1: {b.tolist()}")
    return b


def secular_coefficients(sigma, b) -> SecularCoefficients:
    """Polynomial form of the secular equation, cleared of denominators.

    ``A_k = (-1)**(m-k) * sum_{|S|=k} prod(sigma_S) * (B + sum(b_S))`` where
    ``B = 1 - sum(b)`` is the exterior volume. The subset sums are built with
    an O(m**2) recurrence over elementary symmetric polynomials.
    """
    sigma = np.asarray(sigma, dtype=float)
    b = _check_volumes(b)
    check_sigma(sigma)
    m = sigma.size
    exterior = 1.0 - math.fsum(b)
    # e[k] = sum_{|S|=k} prod sigma_S ; f[k] = sum_{|S|=k} prod sigma_S * sum b_S
    e = np.zeros(m + 1)
    f = np.zeros(m + 1)
    e[0] = 1.0
    for s, bj in zip(sigma, b):
        f[1:] = f[1:] + s * f[:-1] + s * bj * e[:-1]
        e[1:] = e[1:] + s * e[:-1]
    k = np.arange(m + 1)
    A = (-1.0) ** (m - k) * (exterior * e + f)
    return SecularCoefficients(tuple(float(a) for a in A))


def secular_function(lam: float, sigma, b) -> float:
    """Left-hand side of the rational secular equation at ``lam``."""
    sigma = np.asarray(sigma, dtype=float)
    b = np.asarray(b, dtype=float)
    c = sigma * b / (1.0 - math.fsum(b))
    return float(1.0 + np.sum(c / (sigma - lam)))


def _polish(c: np.ndarray, sigma: np.ndarray, x0: float, lo: float, hi: float) -> float:
    """Safeguarded Newton on ``1 + sum c/(sigma - x)`` inside ``(lo, hi)``.

    The function is strictly increasing between consecutive poles, so the
    bracket shrinks monotonically and bisection takes over whenever Newton
    would leave it.
    """
    x = min(max(x0, lo), hi)
    if not lo < x < hi:
        x = 0.5 * (lo + hi)
    for _ in range(200):
        t = c / (sigma - x)
        g = 1.0 + t.sum()
        scale = 1.0 + np.abs(t).sum()
        if abs(g) <= NEWTON_RTOL * scale:
            return x
        if g < 0:
            lo = x
        else:
            hi = x
        dg = np.sum(t / (sigma - x))
        step = x - g / dg if dg > 0 else math.nan
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if step == x or hi - lo <= 4 * np.spacing(max(abs(lo), abs(hi))):
            return step
        x = step
    return x


def _brackets(sigma: np.ndarray, c: np.ndarray) -> list[tuple[float, float]]:
    upper = sigma[-1] + c.sum() * (1.0 + 1e-12) + np.spacing(sigma[-1])
    edges = list(sigma) + [upper]
    return [(edges[j], edges[j + 1]) for j in range(sigma.size)]


def solve_mu(sigma, b) -> tuple[float, ...]:
    """Roots of the secular equation in ascending order.

    Companion-matrix roots of the cleared polynomial give starting values;
    each is then polished on the rational form until its relative residual is
    at most 1e-13.
    """
    sigma = np.asarray(sigma, dtype=float)
    b = _check_volumes(b)
    coeffs = secular_coefficients(sigma, b)
    m = sigma.size
    c = sigma * b / (1.0 - math.fsum(b))
    raw = np.roots(np.asarray(coeffs.A))
    real = np.sort(raw[np.abs(raw.imag) <= 1e-8 * np.maximum(1.0, np.abs(raw))].real)
    if real.size < m:
        raise RootCountMismatch(m, int(real.size))
    brackets = _brackets(sigma, c)
    mu = []
    for j, x0 in enumerate(real[:m]):
        # bracket is located from the start value, not assigned by rank
        where = int(np.searchsorted(sigma, x0, side="right")) - 1
        if where < 0:
            raise InterlacingFailure(j, float(x0), brackets[0])
        lo, hi = brackets[min(where, m - 1)]
        mu.append(_polish(c, sigma, float(x0), lo, hi))
    mu = np.sort(np.asarray(mu))
    for j, (lo, hi) in enumerate(brackets):
        if not lo < mu[j] < (hi if j < m - 1 else math.inf):
            raise InterlacingFailure(j, float(mu[j]), (lo, hi))
    return tuple(float(x) for x in mu)


def build_matrix_M(sigma, b) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.sqrt(b / sigma)
    M = -np.outer(w, w)
    np.fill_diagonal(M, 1.0 / sigma - b / sigma)
    return 0.5 * (M + M.T)


def mu_via_matrix(sigma, b) -> tuple[float, ...]:
    """``mu`` as reciprocals of the eigenvalues of the rank-structured matrix."""
    M = build_matrix_M(sigma, b)
    ev = np.linalg.eigvalsh(M)
    if np.any(np.abs(ev) < 1e-14):
        raise SingularM(f"matrix M has a near-zero eigenvalue: {ev.tolist()}")
    return tuple(float(x) for x in np.sort(1.0 / ev))


def forward(p: DesignParams) -> LimitSpectrum:
    sigma = sigma_from_design(p)
    return LimitSpectrum(sigma, solve_mu(sigma, p.b))


def rho_from_spectrum(spec: LimitSpectrum) -> np.ndarray:
    sigma = np.asarray(spec.sigma)
    mu = np.asarray(spec.mu)
    m = sigma.size
    rho = np.empty(m)
    for j in range(m):
        others = np.arange(m) != j
        ratio = (mu[others] - sigma[j]) / (sigma[others] - sigma[j])
        rho[j] = (mu[j] - sigma[j]) / sigma[j] * np.prod(ratio)
    return rho


def inverse_design(spec: LimitSpectrum, n: int = 2, kappa: float | None = None) -> DesignParams:
    """Unique ``(d, b)`` whose forward image is ``spec``."""
    if not isinstance(spec, LimitSpectrum):
        spec = LimitSpectrum(*spec)
    if kappa is None:
        kappa = default_kappa(n)
    if n >= 3 and kappa is None:
        raise ValueError(f"kappa must be supplied for n={n}")
    sigma = np.asarray(spec.sigma)
    mu = np.asarray(spec.mu)
    rho = rho_from_spectrum(spec)
    if np.any(rho <= 0):
        j = int(np.argmax(rho <= 0))
        raise NotInG(j, f"rho_{j + 1} > 0")
    for k in range(spec.m):
        t = sigma * rho / (sigma - mu[k])
        resid = abs(1.0 + math.fsum(t)) / (1.0 + np.abs(t).sum())
        if resid > RHO_RESIDUAL_TOL:
            raise PrecisionLoss(f"rho back-substitution residual {resid:.2e} at equation {k + 1}")
    total = 1.0 + math.fsum(rho)
    b = rho / total
    if n == 2:
        d = 2.0 * sigma * rho / (math.pi * total)
    else:
        d = (4.0 * sigma * rho / (kappa * total)) ** (1.0 / (n - 2))
    return DesignParams(n=n, d=tuple(d), b=tuple(b), kappa=kappa if n >= 3 else None)


def hole_radius(d_j: float, epsilon: float, n: int) -> float:
    """Hole radius in unit-cell coordinates for scale ``epsilon``."""
    if not (d_j > 0 and epsilon > 0 and n >= 2):
        raise ValueError("need d_j > 0, epsilon > 0, n >= 2")
    if n == 2:
        return math.exp(-1.0 / (d_j * epsilon * epsilon)) / epsilon
    return d_j * epsilon ** (2.0 / (n - 2))


def max_epsilon(d_j: float, n: int) -> float:
    """Upper end of the branch on which the radius law is increasing in epsilon."""
    if n == 2:
        # d/de [-ln e - 1/(d e^2)] = -1/e + 2/(d e^3) vanishes at e^2 = 2/d
        return math.sqrt(2.0 / d_j)
    return 1.0


def epsilon_from_radius(r: float, d_j: float, n: int) -> float:
    if not (r > 0 and d_j > 0):
        raise ValueError("need r > 0 and d_j > 0")
    e_max = max_epsilon(d_j, n)
    r_max = hole_radius(d_j, e_max, n)
    if r > r_max:
        raise NoSolution(f"radius {r!r} exceeds the largest reachable value {r_max!r}")
    if n >= 3:
        eps = (r / d_j) ** ((n - 2) / 2.0)
        if eps <= 0.0:
            raise NoSolution(f"radius {r!r} underflows")
        return eps
    target = math.log(r)

    def g(e):
        return -math.log(e) - 1.0 / (d_j * e * e) - target

    lo = 1.0 / math.sqrt(d_j * (-target + 1.0)) * 0.5
    while g(lo) > 0:
        lo *= 0.5
        if lo < 1e-150:
            raise NoSolution(f"radius {r!r} is too small to invert")
    if r == r_max:
        return e_max
    return brentq(g, lo, e_max, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def maxwell_gap_map(spec: LimitSpectrum) -> list[tuple[float, float]]:
    pos = [(math.sqrt(s), math.sqrt(u)) for s, u in zip(spec.sigma, spec.mu)]
    neg = [(-hi, -lo) for lo, hi in pos]
    return pos + neg


def random_spectrum(rng: np.random.Generator, m: int) -> LimitSpectrum:
    """Random interlaced ``(sigma, mu)`` with ``m`` gaps.

    The first endpoint is uniform in ``[0.5, 2]``; each next one is the
    previous times ``1 + u``, ``u`` uniform in ``[0.05, 1]``, so neighbours
    differ by at least 5 percent and the whole chain spans a few decades.
    """
    x = [rng.uniform(0.5, 2.0)]
    for _ in range(2 * m - 1):
        x.append(x[-1] * (1.0 + rng.uniform(0.05, 1.0)))
    return LimitSpectrum(x[0::2], x[1::2])


def round_trip_error(spec: LimitSpectrum, n: int = 2, kappa: float | None = None) -> float:
    """Max relative error of ``forward(inverse_design(spec))`` against ``spec``."""
    back = forward(inverse_design(spec, n, kappa))
    got = np.asarray(back.sigma + back.mu)
    want = np.asarray(spec.sigma + spec.mu)
    return float(np.max(np.abs(got - want) / np.abs(want)))
