"""Closed-form statistics of the simulated loss-plus-noise channel.

The model: a pure-loss channel with transmissivity ``eta`` followed by an
isotropic Gaussian displacement that raises the received quadrature variance
from 1/4 to ``(1 + xi)/4``.  Everything the key-rate pipeline needs from the
channel reduces to error functions and one geometric series; each closed form
has a quadrature twin used as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate
from scipy.special import erfc

from cvqkd.entropy import binary_entropy
from cvqkd.testfn import TestFunction, eval_lambda

__all__ = [
    "ChannelModel",
    "ProtocolParams",
    "EC_EFFICIENCY",
    "detection_probs",
    "detection_probs_quad",
    "bit_error_rate",
    "q_minus",
    "mean_test_value",
    "expected_test_sum",
    "expected_test_sum_quad",
    "model_fidelity",
    "expected_cost_EC",
    "homodyne_sigma",
    "heterodyne_sigma",
]

# syndrome cost per sifted bit, relative to the Shannon limit
EC_EFFICIENCY = 1.1


@dataclass(frozen=True)
class ChannelModel:
    """Transmissivity (detector efficiency included) and excess noise."""

    eta: float
    xi: float

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"transmissivity must lie in (0, 1], got {self.eta}")
        if self.xi < 0.0:
            raise ValueError(f"excess noise must be nonnegative, got {self.xi}")


@dataclass(frozen=True)
class ProtocolParams:
    """Sender intensity, round-label probabilities, threshold, and reference amplitude."""

    mu: float
    p_sig: float
    p_test: float
    p_trash: float
    x_th: float
    beta: float

    def __post_init__(self) -> None:
        for name in ("mu", "p_sig", "p_test", "p_trash", "x_th"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        total = self.p_sig + self.p_test + self.p_trash
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"label probabilities must sum to 1, got {total}")

    @classmethod
    def for_channel(
        cls,
        ch: ChannelModel,
        mu: float,
        p_sig: float,
        p_test: float,
        p_trash: float,
        x_th: float,
    ) -> "ProtocolParams":
        """Standard construction with the reference amplitude matched to the channel."""
        return cls(
            mu=mu,
            p_sig=p_sig,
            p_test=p_test,
            p_trash=p_trash,
            x_th=x_th,
            beta=math.sqrt(ch.eta * mu),
        )


def homodyne_sigma(xi: float) -> float:
    """Standard deviation of the received homodyne outcome."""
    return math.sqrt((1.0 + xi) / 4.0)


def heterodyne_sigma(xi: float) -> float:
    """Per-quadrature standard deviation of the received heterodyne outcome."""
    return math.sqrt(0.5 + xi / 4.0)


def detection_probs(ch: ChannelModel, pp: ProtocolParams) -> tuple[float, float]:
    """Probabilities of a correct-sign and wrong-sign accepted homodyne outcome."""
    amp = math.sqrt(ch.eta * pp.mu)
    scale = math.sqrt(2.0 / (1.0 + ch.xi))
    p_plus = 0.5 * erfc((pp.x_th - amp) * scale)
    p_minus = 0.5 * erfc((pp.x_th + amp) * scale)
    return p_plus, p_minus


def detection_probs_quad(ch: ChannelModel, pp: ProtocolParams) -> tuple[float, float]:
    """Quadrature cross-check of :func:`detection_probs`.

    Integrates the received Gaussian quadrature density directly over the
    acceptance regions.
    """
    amp = math.sqrt(ch.eta * pp.mu)
    var = (1.0 + ch.xi) / 4.0
    norm = 1.0 / math.sqrt(2.0 * math.pi * var)

    def density(x: float) -> float:
        return norm * math.exp(-((x - amp) ** 2) / (2.0 * var))

    cut = pp.x_th + amp + 20.0 * math.sqrt(var)
    # relative-only tolerance: the wrong-sign tail can sit near 1e-30
    opts = dict(limit=300, epsabs=1e-300, epsrel=1e-13)
    p_plus = integrate.quad(density, pp.x_th, cut, **opts)[0]
    p_minus = integrate.quad(density, -cut, -pp.x_th, **opts)[0]
    return p_plus, p_minus


def bit_error_rate(p_plus: float, p_minus: float) -> float:
    """Fraction of accepted signal rounds with the wrong sign."""
    total = p_plus + p_minus
    if total <= 0.0:
        raise ValueError("success probability vanishes; bit error rate undefined")
    return p_minus / total


def q_minus(mu: float) -> float:
    """Probability of the minus outcome on the sender's trash-round qubit."""
    return -math.expm1(-2.0 * mu) / 2.0


def mean_test_value(ch: ChannelModel, tf: TestFunction) -> float:
    """Expected test-function value in a single test round.

    Holds for the matched reference amplitude ``beta = sqrt(eta mu)``, where
    the displaced outcome magnitude is exponentially distributed with mean
    ``1 + xi/2``.
    """
    s = 1.0 + ch.xi / 2.0
    base = (ch.xi / 2.0) / (1.0 + tf.r * s)
    return (1.0 - (-1.0) ** (tf.m + 1) * base ** (tf.m + 1)) / s


def expected_test_sum(
    ch: ChannelModel, pp: ProtocolParams, tf: TestFunction, n_rounds: float
) -> float:
    """Expected accumulated test sum over ``n_rounds`` protocol rounds."""
    matched = math.sqrt(ch.eta * pp.mu)
    if abs(pp.beta - matched) > 1e-9 * max(1.0, matched):
        raise ValueError(
            "closed-form test sum requires beta = sqrt(eta mu); "
            f"got beta={pp.beta}, matched value {matched}"
        )
    return pp.p_test * n_rounds * mean_test_value(ch, tf)


def expected_test_sum_quad(
    ch: ChannelModel, pp: ProtocolParams, tf: TestFunction, n_rounds: float
) -> float:
    """Quadrature cross-check of :func:`expected_test_sum`.

    Integrates the test function against the radial density of the displaced
    heterodyne outcome instead of using the geometric closed form.
    """
    matched = math.sqrt(ch.eta * pp.mu)
    if abs(pp.beta - matched) > 1e-9 * max(1.0, matched):
        raise ValueError("quadrature oracle is defined for beta = sqrt(eta mu)")
    s = 1.0 + ch.xi / 2.0
    cut = s * (80.0 + 40.0 / (1.0 + tf.r))
    val, err = integrate.quad(
        lambda u: eval_lambda(tf, u) * math.exp(-u / s) / s,
        0.0,
        cut,
        limit=400,
        epsabs=1e-14,
        epsrel=1e-13,
    )
    if err > 1e-10:
        raise RuntimeError(f"test-sum quadrature error too large: {err}")
    return pp.p_test * n_rounds * val


def model_fidelity(xi: float) -> float:
    """Fidelity of the received state to the matched coherent state."""
    if xi < 0.0:
        raise ValueError(f"excess noise must be nonnegative, got {xi}")
    return 1.0 / (1.0 + xi / 2.0)


def expected_cost_EC(n_suc: float, e_bit: float) -> float:
    """Syndrome length consumed by error correction."""
    if not 0.0 <= e_bit <= 0.5:
        raise ValueError(f"bit error rate must lie in [0, 1/2], got {e_bit}")
    return EC_EFFICIENCY * n_suc * binary_entropy(e_bit)
