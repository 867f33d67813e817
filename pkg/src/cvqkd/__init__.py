"""Security bounds, key rates, and simulation for binary-modulated CV QKD.

The package is organized around the protocol's pipeline:

- :mod:`cvqkd.testfn` - the bounded fidelity-test function applied to
  heterodyne outcomes, with its extrema and moment constants.
- :mod:`cvqkd.opbound` - the spectral bound on the phase-error observable
  combination, plus a truncated-Fock brute-force oracle.
- :mod:`cvqkd.channel` - closed-form statistics of the loss-plus-noise
  channel model.
- :mod:`cvqkd.finitesize` - concentration terms, the phase-error budget, the
  final key length, and the security-parameter composition.
- :mod:`cvqkd.keyrate` - the end-to-end gain objective and the two-level
  parameter optimization.
- :mod:`cvqkd.mcsim` - a seeded Monte Carlo simulator of the protocol rounds.
- :mod:`cvqkd.cli` - scan/simulate/validate command-line driver.
"""

from cvqkd.channel import ChannelModel, ProtocolParams
from cvqkd.finitesize import RoundTally, SecurityBudget
from cvqkd.keyrate import KeyRatePoint, OptimizerSettings
from cvqkd.opbound import AcceptanceSpec, DualCoefficients, ParityMoments
from cvqkd.testfn import FockDiagonal, TestFunction

__version__ = "0.1.0"

__all__ = [
    "AcceptanceSpec",
    "ChannelModel",
    "DualCoefficients",
    "FockDiagonal",
    "KeyRatePoint",
    "OptimizerSettings",
    "ParityMoments",
    "ProtocolParams",
    "RoundTally",
    "SecurityBudget",
    "TestFunction",
    "__version__",
]
