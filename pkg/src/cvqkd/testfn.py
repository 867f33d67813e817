"""Fidelity test function for heterodyne measurements.

A heterodyne outcome ``w`` is mapped through a bounded function of ``|w|^2``
built from associated Laguerre polynomials.  For odd polynomial order the
expectation of that function over any single-mode state is a lower bound on
the state's fidelity to the vacuum (and, after displacing the argument, to a
coherent state), which is what makes it usable as a statistical test.

This module provides the function itself, certified extrema over ``[0, inf)``,
the moment constants linking its expectation to the photon-number
distribution, and a slow quadrature-based expectation used as an independent
cross-check of the series evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

__all__ = [
    "TestFunction",
    "FockDiagonal",
    "laguerre",
    "eval_lambda",
    "compute_extrema",
    "moment_constant",
    "expectation_lambda_fock",
    "expectation_lambda_quad",
]


def laguerre(n: int, k: int, x):
    """Associated Laguerre polynomial ``L_n^(k)(x)``.

    Evaluated with the three-term recurrence in the degree, which is stable
    for the small orders used here.  ``x`` may be a scalar or an ndarray.
    """
    if n < 0 or k < 0:
        raise ValueError("laguerre orders must be nonnegative")
    arr = np.asarray(x, dtype=float)
    prev = np.ones_like(arr)
    if n == 0:
        return float(prev) if arr.ndim == 0 else prev
    cur = 1.0 + k - arr
    for i in range(1, n):
        prev, cur = cur, ((2 * i + k + 1 - arr) * cur - (i + k) * prev) / (i + 1)
    return float(cur) if arr.ndim == 0 else cur


def _laguerre_coeffs(n: int, k: int) -> list[float]:
    # ascending coefficients of L_n^(k): c_j = (-1)^j C(n+k, n-j) / j!
    return [
        (-1) ** j * math.comb(n + k, n - j) / math.factorial(j) for j in range(n + 1)
    ]


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function of polynomial order ``m`` and decay rate ``r``.

    ``lambda_min`` and ``lambda_max`` are the certified infimum and supremum
    over ``[0, inf)``; they bound every evaluation and enter the
    concentration-inequality ranges downstream.
    """

    m: int
    r: float
    lambda_min: float
    lambda_max: float

    def __post_init__(self) -> None:
        if self.m < 0 or self.m != int(self.m):
            raise ValueError(f"polynomial order must be a nonnegative integer, got {self.m}")
        if self.r <= 0:
            raise ValueError(f"decay rate must be positive, got {self.r}")

    @classmethod
    def create(cls, m: int, r: float) -> "TestFunction":
        """Build a test function, computing its extrema."""
        lo, hi = compute_extrema(m, r)
        return cls(m=m, r=r, lambda_min=lo, lambda_max=hi)


def eval_lambda(tf: TestFunction, mu):
    """Evaluate the test function at ``mu >= 0`` (scalar or ndarray)."""
    arr = np.asarray(mu, dtype=float)
    val = np.exp(-tf.r * arr) * (1.0 + tf.r) * laguerre(tf.m, 1, (1.0 + tf.r) * arr)
    return float(val) if arr.ndim == 0 else val


def _stationary_points(m: int, r: float) -> list[float]:
    """All stationary points of the test function on (0, inf).

    The derivative is ``exp(-r mu)`` times a degree-``m`` polynomial in
    ``u = (1+r) mu``; its real roots are located with the companion matrix and
    polished by Newton iteration.
    """
    # derivative polynomial in u: -r L_m^(1)(u) - (1+r) L_{m-1}^(2)(u)
    coeffs = [-r * c for c in _laguerre_coeffs(m, 1)]
    for j, c in enumerate(_laguerre_coeffs(m - 1, 2)):
        coeffs[j] -= (1.0 + r) * c
    poly = np.polynomial.Polynomial(coeffs)
    dpoly = poly.deriv()
    roots = poly.roots()
    out = []
    for z in roots:
        if abs(z.imag) > 1e-6 * max(1.0, abs(z)):
            continue
        u = float(z.real)
        if u <= 0.0:
            continue
        scale = max(abs(c) for c in coeffs)
        converged = False
        for _ in range(80):
            f = poly(u)
            df = dpoly(u)
            if df == 0.0:
                break
            step = f / df
            u -= step
            if abs(step) <= 1e-13 * max(1.0, abs(u)):
                converged = True
                break
        if not converged and abs(poly(u)) > 1e-9 * scale:
            raise RuntimeError(
                f"stationary-point refinement did not converge for m={m}, r={r}"
            )
        out.append(u / (1.0 + r))
    return sorted(out)


def compute_extrema(m: int, r: float) -> tuple[float, float]:
    """Certified (infimum, supremum) of the test function over ``[0, inf)``.

    Candidates are the endpoint ``mu = 0``, every stationary point, and the
    tail limit 0.  A dense sampling guard raises if any sampled value escapes
    the reported range, which would indicate a missed stationary point.
    """
    if m < 0:
        raise ValueError("polynomial order must be nonnegative")
    if r <= 0:
        raise ValueError("decay rate must be positive")
    tf = TestFunction(m=m, r=r, lambda_min=-math.inf, lambda_max=math.inf)
    if m == 0:
        # monotone decay from (1+r) to 0
        return 0.0, 1.0 + r
    cand_mu = [0.0] + _stationary_points(m, r)
    values = [eval_lambda(tf, mu) for mu in cand_mu]
    values.append(0.0)  # tail limit
    lo, hi = min(values), max(values)
    span = max(cand_mu) + 10.0 / r if cand_mu else 10.0 / r
    sampled = eval_lambda(tf, np.linspace(0.0, span, 4001))
    if sampled.min() < lo - 1e-9 or sampled.max() > hi + 1e-9:
        raise RuntimeError(
            f"extremum search missed a stationary point for m={m}, r={r}"
        )
    return float(lo), float(hi)


@lru_cache(maxsize=None)
def moment_constant(n: int, m: int) -> float:
    """Moment constant I(n, m) = (1/n!) * integral of exp(-mu) mu^n L_m^(1)(mu).

    Computed by the two-index recurrence with base cases I(n, 0) = I(0, m) = 1.
    Vanishes for m >= n >= 1 and carries sign (-1)^m for n > m.
    """
    if n < 0 or m < 0:
        raise ValueError("moment constant indices must be nonnegative")
    if n == 0 or m == 0:
        return 1.0
    return ((n + m) / n) * moment_constant(n - 1, m) - ((m + 1) / n) * moment_constant(
        n - 1, m - 1
    )


@dataclass(frozen=True)
class FockDiagonal:
    """Photon-number distribution ``p_0 .. p_nmax`` of a state, possibly truncated."""

    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probabilities)
        object.__setattr__(self, "probabilities", probs)
        if not probs:
            raise ValueError("photon-number distribution must be nonempty")
        if any(p < 0.0 for p in probs):
            raise ValueError("photon-number probabilities must be nonnegative")
        if sum(probs) > 1.0 + 1e-12:
            raise ValueError("photon-number probabilities must sum to at most 1")

    @property
    def n_max(self) -> int:
        return len(self.probabilities) - 1


def expectation_lambda_fock(tf: TestFunction, rho: FockDiagonal) -> float:
    """Expectation of the test function via the moment-constant series.

    Equals ``sum_n p_n I(n, m) / (1+r)^n``; for odd ``m`` this never exceeds
    the vacuum weight ``p_0``.
    """
    base = 1.0 + tf.r
    total = 0.0
    for n, p in enumerate(rho.probabilities):
        if p != 0.0:
            total += p * moment_constant(n, tf.m) / base**n
    return total


def _poisson_mixture(rho: FockDiagonal, mu: float) -> float:
    # sum_n p_n e^{-mu} mu^n / n!, evaluated through logs for large n
    if mu <= 0.0:
        return rho.probabilities[0]
    total = 0.0
    log_mu = math.log(mu)
    for n, p in enumerate(rho.probabilities):
        if p != 0.0:
            total += p * math.exp(n * log_mu - mu - math.lgamma(n + 1))
    return total


def expectation_lambda_quad(tf: TestFunction, rho: FockDiagonal) -> float:
    """Quadrature cross-check of :func:`expectation_lambda_fock`.

    Integrates the test function against the radial outcome density of the
    heterodyne measurement (a Poisson mixture over the photon-number
    distribution), independently of the moment-constant recurrence.
    """
    mu_cut = 3.0 * rho.n_max + 80.0
    val, err = integrate.quad(
        lambda mu: eval_lambda(tf, mu) * _poisson_mixture(rho, mu),
        0.0,
        mu_cut,
        limit=400,
        epsabs=1e-13,
        epsrel=1e-12,
    )
    if not math.isfinite(val) or err > 1e-9:
        raise RuntimeError(f"expectation quadrature failed: value={val}, err={err}")
    return val
