"""Seeded Monte Carlo simulation of the protocol rounds.

Outcome laws under the loss-plus-noise model are exactly Gaussian, so the
simulator samples measurement outcomes directly instead of representing
states: homodyne outcomes with variance ``(1 + xi)/4`` in signal rounds,
per-quadrature variance ``1/2 + xi/4`` in heterodyne test rounds, and a
Bernoulli minus outcome in trash rounds.

Randomness comes from a counter-based generator keyed per 2^16-round chunk by
``(seed, chunk_index)``, with normals drawn by inverse CDF, so a run is a
pure function of ``(seed, config)``: chunks are independent and merge in
round order regardless of how they are executed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from cvqkd.channel import (
    ChannelModel,
    ProtocolParams,
    expected_cost_EC,
    heterodyne_sigma,
    homodyne_sigma,
    q_minus,
)
from cvqkd.finitesize import (
    RoundTally,
    SecurityBudget,
    final_key_length,
    net_gain,
    phase_error_budget,
)
from cvqkd.opbound import AcceptanceSpec, DualCoefficients, bound_B, parity_moments
from cvqkd.testfn import TestFunction, eval_lambda

__all__ = ["SimConfig", "SimResult", "run", "empirical_key_run"]

_CHUNK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a simulation run bit for bit."""

    seed: int
    n_rounds: int
    ch: ChannelModel
    pp: ProtocolParams
    tf: TestFunction

    def __post_init__(self) -> None:
        if self.n_rounds < 0:
            raise ValueError(f"round count must be nonnegative, got {self.n_rounds}")
        if self.tf.m % 2 == 0:
            raise ValueError("protocol use requires an odd polynomial order")


@dataclass(frozen=True)
class SimResult:
    """Realized tallies of one run."""

    tally: RoundTally
    bit_errors: int
    q_minus_hat: int

    def __post_init__(self) -> None:
        if self.bit_errors > self.tally.n_suc:
            raise ValueError("bit errors cannot exceed successful rounds")
        if self.q_minus_hat > self.tally.n_trash:
            raise ValueError("minus outcomes cannot exceed trash rounds")


def _chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def _normals(u: np.ndarray) -> np.ndarray:
    # inverse-CDF sampling; the clip guards the measure-zero u == 0 draw
    return ndtri(np.maximum(u, 2.0**-55))


def run(config: SimConfig) -> SimResult:
    """Simulate the labeling and measurement rounds of the protocol.

    Per round: the sender draws a uniform bit, the receiver draws a label;
    signal rounds produce a homodyne outcome accepted beyond the threshold
    with the key bit read off its sign, test rounds produce a heterodyne
    outcome fed through the test function around the signed reference
    amplitude, trash rounds flip the sender-side minus coin.
    """
    ch, pp, tf = config.ch, config.pp, config.tf
    amp = math.sqrt(ch.eta * pp.mu)
    sig_hom = homodyne_sigma(ch.xi)
    sig_het = heterodyne_sigma(ch.xi)
    qm = q_minus(pp.mu)
    n_suc = n_fail = n_test = n_trash = 0
    bit_errors = 0
    minus_hits = 0
    f_sum = 0.0
    for start in range(0, config.n_rounds, _CHUNK):
        size = min(_CHUNK, config.n_rounds - start)
        u = _chunk_rng(config.seed, start // _CHUNK).random((size, 4))
        sign_a = np.where(u[:, 1] < 0.5, 1.0, -1.0)
        is_sig = u[:, 0] < pp.p_sig
        is_test = ~is_sig & (u[:, 0] < pp.p_sig + pp.p_test)
        is_trash = ~is_sig & ~is_test

        x = sign_a[is_sig] * amp + sig_hom * _normals(u[is_sig, 2])
        accept = np.abs(x) >= pp.x_th
        n_suc += int(accept.sum())
        n_fail += int((~accept).sum())
        # bit b = 0 for positive sign; an error is a sign flip relative to a
        bit_errors += int((np.sign(x[accept]) != sign_a[is_sig][accept]).sum())

        sa_test = sign_a[is_test]
        w_re = sa_test * amp + sig_het * _normals(u[is_test, 2])
        w_im = sig_het * _normals(u[is_test, 3])
        dist_sq = (w_re - sa_test * pp.beta) ** 2 + w_im**2
        f_sum += float(eval_lambda(tf, dist_sq).sum())
        n_test += int(is_test.sum())

        n_trash += int(is_trash.sum())
        minus_hits += int((u[is_trash, 2] < qm).sum())
    tally = RoundTally(
        n_suc=n_suc, n_fail=n_fail, n_test=n_test, n_trash=n_trash, f_sum=f_sum
    )
    return SimResult(tally=tally, bit_errors=bit_errors, q_minus_hat=minus_hits)


def empirical_key_run(
    config: SimConfig,
    budget: SecurityBudget,
    duals: DualCoefficients,
) -> tuple[int, float]:
    """Key length and net gain realized by one simulated run.

    Feeds the stochastic tallies through the same budget pipeline as the
    analytic evaluation, with the error-correction cost priced at the
    empirical bit error rate.
    """
    result = run(config)
    tally = result.tally
    pp = config.pp
    pm = parity_moments(AcceptanceSpec(pp.x_th, pp.beta))
    bound = bound_B(pm, duals)
    qm = q_minus(pp.mu)
    u_bound = phase_error_budget(tally, pp, duals, config.tf, bound, budget, qm)
    n_fin = final_key_length(tally.n_suc, u_bound, budget)
    e_bit = result.bit_errors / tally.n_suc if tally.n_suc > 0 else 0.0
    cost = expected_cost_EC(tally.n_suc, e_bit)
    return n_fin, net_gain(n_fin, cost, budget, config.n_rounds)
