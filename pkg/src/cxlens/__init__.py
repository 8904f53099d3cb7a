"""cxlens: local decision-boundary analysis for small complex-valued classifiers.

Train a two-layer complex network on the synthetic C^2 helix, mine uncertain
anchors, fit kink-aware polynomial surrogates of the logit difference, expand
them into Puiseux branches, probe robustness rays on the real network, and
apply multiplicity-guided temperature calibration with fold-wise statistics.
"""

__version__ = "0.1.0"

from . import calib, ccore, mine, probe, puiseux, stats, surrogate, synth  # noqa: F401
