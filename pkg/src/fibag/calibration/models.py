from dataclasses import dataclass
from enum import Enum

from pydantic import BaseModel, Field, model_validator


class AggregationKind(Enum):
    AVERAGE = "average"
    MAXIMAL = "maximal"
    PRECISION_WEIGHTED = "precision-weighted"


class AggregationScheme(BaseModel):
    """How several lBFs for one covariate collapse into a scalar.

    ``weights`` only applies to precision weighting; when omitted there,
    each result's ``1 / tau_sq_hat`` is used.
    """

    kind: AggregationKind = AggregationKind.MAXIMAL
    weights: list[float] | None = None

    @model_validator(mode="after")
    def _check_weights(self) -> "AggregationScheme":
        if self.weights is not None:
            if self.kind is not AggregationKind.PRECISION_WEIGHTED:
                raise ValueError("weights only apply to precision-weighted aggregation")
            if any(w <= 0 for w in self.weights):
                raise ValueError("precision weights must be strictly positive")
        return self


class CalibrationConfig(BaseModel):
    """Constants of the logistic map from evidence to Beta hyperparameters."""

    floor: float = Field(1e-6, gt=0)
    midpoint: float = Field(3.0, gt=0)
    exponent: float = Field(2.75, gt=0)
    power: float = Field(4.0, gt=0)
    scale: float = Field(16.0, gt=0)


@dataclass(frozen=True)
class CalibratedPrior:
    covariate_id: str
    s: float
    f_value: float
    beta_a: float
    beta_b: float
    prior_mean: float
    prior_variance: float

    def to_row(self) -> dict:
        return {
            "covariate_id": self.covariate_id,
            "s": self.s,
            "beta_a": self.beta_a,
            "beta_b": self.beta_b,
            "prior_mean": self.prior_mean,
        }
