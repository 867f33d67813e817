"""Finite-size statistics: deviation terms, phase-error budget, key length.

Two concentration results feed the budget.  A martingale bound covers the
per-round linear combination of phase-error, test, and trash observables,
whose increments are confined to ``[c_min, c_max]``; a Chernoff bound covers
the binomial count of minus outcomes in trash rounds.  Their deviations,
together with the spectral bound on the observable combination, produce a
high-confidence upper bound on the phase-error count, from which the final
key length and net gain follow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from cvqkd.channel import ProtocolParams
from cvqkd.entropy import binary_entropy, kl_divergence
from cvqkd.opbound import DualCoefficients
from cvqkd.testfn import TestFunction

__all__ = [
    "SecurityBudget",
    "RoundTally",
    "azuma_delta1",
    "azuma_range",
    "chernoff_delta2",
    "phase_error_budget",
    "final_key_length",
    "net_gain",
]


@dataclass(frozen=True)
class SecurityBudget:
    """Failure-probability budget of the protocol.

    ``eps`` is the phase-error estimation failure probability, ``s`` the
    privacy-amplification surplus exponent, and ``s_prime`` the verification
    exponent.  They must compose into the overall security parameter:
    ``sqrt(2 (eps + 2^-s)) + 2^-s_prime <= eps_sec``.
    """

    eps_sec: float
    eps: float
    s: float
    s_prime: float

    def __post_init__(self) -> None:
        if not 0.0 < self.eps_sec < 1.0:
            raise ValueError(f"eps_sec must lie in (0, 1), got {self.eps_sec}")
        if self.eps <= 0.0 or self.s <= 0.0 or self.s_prime <= 0.0:
            raise ValueError("eps, s, and s_prime must be positive")
        if self.composition() > self.eps_sec * (1.0 + 1e-9):
            raise ValueError(
                f"security composition {self.composition()} exceeds eps_sec {self.eps_sec}"
            )

    @classmethod
    def default(cls, eps_sec: float = 2.0**-50) -> "SecurityBudget":
        """Standard instantiation: eps = 2^-s = eps_sec^2 / 16, 2^-s' = eps_sec / 2.

        Saturates the composition rule with equality.
        """
        eps = eps_sec * eps_sec / 16.0
        return cls(
            eps_sec=eps_sec,
            eps=eps,
            s=math.log2(16.0 / (eps_sec * eps_sec)),
            s_prime=math.log2(2.0 / eps_sec),
        )

    def composition(self) -> float:
        """Achieved overall security parameter (secrecy plus correctness)."""
        return math.sqrt(2.0 * (self.eps + 2.0**-self.s)) + 2.0**-self.s_prime


@dataclass(frozen=True)
class RoundTally:
    """Counts of the four round outcomes plus the accumulated test sum.

    Entries may be floats when the tally holds expectation values rather than
    realized counts.
    """

    n_suc: float
    n_fail: float
    n_test: float
    n_trash: float
    f_sum: float

    def __post_init__(self) -> None:
        for name in ("n_suc", "n_fail", "n_test", "n_trash"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def n_total(self) -> float:
        return self.n_suc + self.n_fail + self.n_test + self.n_trash


def azuma_delta1(eps: float, n_total: float, c_min: float, c_max: float) -> float:
    """Martingale deviation allowance for increments confined to [c_min, c_max]."""
    if eps > 1.0 or eps <= 0.0:
        raise ValueError(f"failure probability must lie in (0, 1], got {eps}")
    if c_max <= c_min:
        raise ValueError(f"need c_max > c_min, got [{c_min}, {c_max}]")
    if n_total < 1:
        raise ValueError(f"need at least one round, got {n_total}")
    return (c_max - c_min) * math.sqrt((n_total / 2.0) * math.log(1.0 / eps))


def azuma_range(
    pp: ProtocolParams, duals: DualCoefficients, tf: TestFunction
) -> tuple[float, float]:
    """Increment range of the per-round observable combination.

    A round contributes at most one of: a phase error weighted by 1/p_sig, a
    test value in [lambda_min, lambda_max] weighted by kappa/p_test, or a
    minus outcome weighted by -gamma/p_trash.
    """
    c_min = min(duals.kappa * tf.lambda_min / pp.p_test, -duals.gamma / pp.p_trash, 0.0)
    c_max = max(1.0 / pp.p_sig, duals.kappa * tf.lambda_max / pp.p_test, 0.0)
    return c_min, c_max


def chernoff_delta2(eps: float, n: float, q_minus: float) -> float:
    """Chernoff deviation allowance for the binomial minus-outcome count.

    Solves ``n D(q + delta/n || q) = ln(1/eps)`` by bisection; when even the
    full range cannot push the tail below ``eps`` (``eps <= q^n``) the
    deterministic ceiling ``(1 - q) n`` applies.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"failure probability must lie in (0, 1), got {eps}")
    if not 0.0 < q_minus < 1.0:
        raise ValueError(f"q_minus must lie in (0, 1), got {q_minus}")
    if n < 0:
        raise ValueError(f"round count must be nonnegative, got {n}")
    if n == 0:
        return 0.0
    ceiling = (1.0 - q_minus) * n
    if math.log(eps) <= n * math.log(q_minus):
        return ceiling
    target = math.log(1.0 / eps)

    def excess(delta: float) -> float:
        return n * kl_divergence(q_minus + delta / n, q_minus) - target

    lo, hi = 0.0, ceiling
    f_lo = excess(lo)
    if f_lo > 0.0:
        raise RuntimeError("bisection bracket invalid at delta = 0")
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-9:
            return 0.5 * (lo + hi)
    raise RuntimeError("Chernoff deviation bisection did not converge")


def phase_error_budget(
    tally: RoundTally,
    pp: ProtocolParams,
    duals: DualCoefficients,
    tf: TestFunction,
    bound: float,
    budget: SecurityBudget,
    q_minus: float,
) -> float:
    """High-confidence upper bound on the phase-error count.

    Combines the spectral bound, the martingale deviation at failure
    probability ``eps/2``, the observed test sum credit, and the Chernoff
    allowance for the trash statistics at ``eps/2``.  No clamping here; the
    key-length computation owns that.
    """
    n = tally.n_total
    c_min, c_max = azuma_range(pp, duals, tf)
    d1 = azuma_delta1(budget.eps / 2.0, n, c_min, c_max)
    d2 = chernoff_delta2(budget.eps / 2.0, tally.n_trash, q_minus)
    return (
        pp.p_sig * n * bound
        + pp.p_sig * d1
        - (pp.p_sig / pp.p_test) * duals.kappa * tally.f_sum
        + (pp.p_sig / pp.p_trash) * duals.gamma * (q_minus * tally.n_trash + d2)
    )


def final_key_length(n_suc: float, u_bound: float, budget: SecurityBudget) -> int:
    """Extractable key length after privacy amplification.

    The phase-error rate is ``u_bound / n_suc`` clamped to [0, 1]; at or above
    1/2 no key is extractable.
    """
    if n_suc <= 0:
        return 0
    e_ph = min(max(u_bound / n_suc, 0.0), 1.0)
    if e_ph >= 0.5:
        return 0
    raw = n_suc * (1.0 - binary_entropy(e_ph)) - budget.s
    return max(0, math.floor(raw))


def net_gain(n_fin: float, cost_ec: float, budget: SecurityBudget, n_total: float) -> float:
    """Net key bits per pulse after error-correction and verification costs."""
    if n_total <= 0:
        raise ValueError(f"round count must be positive, got {n_total}")
    return max(0.0, (n_fin - cost_ec - budget.s_prime) / n_total)
