"""Binary entropy and Kullback-Leibler divergence for Bernoulli distributions."""

from __future__ import annotations

import math


def binary_entropy(x: float) -> float:
    """Shannon entropy of a bit with bias ``x``, in bits; h(0) = h(1) = 0."""
    if x < 0.0 or x > 1.0:
        raise ValueError(f"binary entropy argument must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def kl_divergence(x: float, y: float) -> float:
    """KL divergence D(x || y) between Bernoulli(x) and Bernoulli(y), in nats.

    ``y`` must be an interior point; ``x`` may sit on the boundary, where the
    usual 0*log(0) = 0 convention applies.
    """
    if not 0.0 < y < 1.0:
        raise ValueError(f"reference probability must lie in (0, 1), got {y}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {x}")
    first = 0.0 if x == 0.0 else x * math.log(x / y)
    second = 0.0 if x == 1.0 else (1.0 - x) * math.log((1.0 - x) / (1.0 - y))
    return first + second
