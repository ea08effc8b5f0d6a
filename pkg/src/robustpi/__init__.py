"""Mixed H2/H-infinity state-feedback synthesis via nested double-loop policy
iteration, with a model-based solver, a trajectory-data-driven variant, an
H-infinity certification layer, and robustness experiments for inexact
updates."""

from . import (cli, errors, matops, npg_baseline, pi_model_based, pi_sampling,
               plant, riccati, robustness_lab)

__all__ = [
    "cli", "errors", "matops", "npg_baseline", "pi_model_based",
    "pi_sampling", "plant", "riccati", "robustness_lab",
]

__version__ = "0.1.0"
