"""Configuration, chain state and fit records for the calibrated spike-and-slab model."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field, model_validator


class Algorithm(Enum):
    GIBBS = "gibbs"
    SELECTION_MCMC = "select-mcmc"
    EMVS = "emvs"


class BmaWeighting(Enum):
    """How retained coefficient draws are combined in the selection-only sampler."""

    SOFTMAX = "softmax"
    NEGATIVE_LOG_POSTERIOR = "negative-log-posterior"


class EmvsConfig(BaseModel):
    max_iter: int = Field(500, ge=1)
    tol: float = Field(1e-6, gt=0)
    omega_clamp: float = Field(1e-6, gt=0, lt=0.5)


class SurvivalAugmentation(BaseModel):
    """Censored-outcome handling; imputation sweeps per selection move."""

    sweeps: int = Field(1, ge=1)


class CbvsConfig(BaseModel):
    """Hyperparameters and run settings of the outcome model.

    sigma^2 ~ Inverse-Gamma(nu/2, nu*lambda_sig/2); spike and slab variances
    v0 <= v1 scale with sigma^2.
    """

    v0: float = Field(0.025, gt=0)
    v1: float = Field(1.0, gt=0)
    nu: float = Field(3.0, gt=0)
    lambda_sig: float = Field(1.0, gt=0)
    algorithm: Algorithm = Algorithm.GIBBS
    iterations: int = Field(50_000, ge=0)
    burn_in: int = Field(10_000, ge=0)
    thin: int = Field(1, ge=1)
    seed: int | None = None
    hastings_correction: bool = True
    bma_weighting: BmaWeighting = BmaWeighting.SOFTMAX
    mcse_batches: int = Field(50, ge=2)
    emvs: EmvsConfig = EmvsConfig()
    survival: SurvivalAugmentation = SurvivalAugmentation()

    @model_validator(mode="after")
    def _check_ranges(self) -> "CbvsConfig":
        if self.v0 > self.v1:
            raise ValueError(f"spike variance v0={self.v0} exceeds slab variance v1={self.v1}")
        # iterations == 0 is left for the samplers to reject
        if self.iterations and self.burn_in >= self.iterations:
            raise ValueError(f"burn_in={self.burn_in} must be below iterations={self.iterations}")
        return self


@dataclass
class ModelState:
    """Current values of one Gibbs chain."""

    beta: np.ndarray
    gamma: np.ndarray
    omega: np.ndarray
    sigma_sq: float
    y_latent: np.ndarray | None = None

    def prior_variances(self, n_fixed: int, v0: float, v1: float) -> np.ndarray:
        """Diagonal of A_gamma: v1 on intercept and B, v0/v1 on the selectable block."""
        return np.concatenate([np.full(n_fixed, v1), np.where(self.gamma == 1, v1, v0)])


@dataclass(frozen=True)
class CbvsFit:
    algorithm: Algorithm
    seed: int | None
    covariate_ids: tuple[str, ...]
    design_ids: tuple[str, ...]
    pip: np.ndarray
    beta_hat: np.ndarray
    beta_raw: np.ndarray
    sigma_hat: float
    log_post_trace: np.ndarray
    beta_sd: np.ndarray | None = None
    beta_mcse: np.ndarray | None = None
    pip_mcse: np.ndarray | None = None
    acceptance_rate: float | None = None
    em_iterations: int | None = None
    objective: float | None = None
    omega_hat: np.ndarray | None = None
    model_counts: dict[str, int] = field(default_factory=dict, compare=False)

    @property
    def n_fixed(self) -> int:
        return len(self.design_ids) - len(self.covariate_ids)

    def summary_rows(self) -> list[dict]:
        offset = self.n_fixed
        return [
            {
                "covariate_id": cid,
                "pip": float(self.pip[j]),
                "beta_std": float(self.beta_hat[offset + j]),
                "beta_raw": float(self.beta_raw[offset + j]),
            }
            for j, cid in enumerate(self.covariate_ids)
        ]

    def to_dict(self) -> dict:
        def _list(values: np.ndarray | None) -> list[float] | None:
            return None if values is None else [float(v) for v in values]

        return {
            "algorithm": self.algorithm.value,
            "seed": self.seed,
            "covariate_ids": list(self.covariate_ids),
            "design_ids": list(self.design_ids),
            "pip": _list(self.pip),
            "beta_std": _list(self.beta_hat),
            "beta_raw": _list(self.beta_raw),
            "beta_sd": _list(self.beta_sd),
            "beta_mcse": _list(self.beta_mcse),
            "pip_mcse": _list(self.pip_mcse),
            "sigma_hat": self.sigma_hat,
            "omega_hat": _list(self.omega_hat),
            "diagnostics": {
                "acceptance_rate": self.acceptance_rate,
                "em_iterations": self.em_iterations,
                "objective": self.objective,
                "log_post_trace": _list(self.log_post_trace),
            },
        }
