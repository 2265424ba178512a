"""fiBAG: functional evidence calibrated into Bayesian variable selection."""

__version__ = "0.1.0"
