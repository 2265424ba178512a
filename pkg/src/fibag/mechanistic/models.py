"""Configuration and result types for the mechanistic evidence models."""

import math
from dataclasses import dataclass
from enum import Enum

from pydantic import BaseModel, Field
from scipy.special import gammaln


class Axis(Enum):
    DRIVER_GENE = "driver_gene"
    DRIVER_PROTEIN = "driver_protein"
    CASCADING_PROTEIN = "cascading_protein"

    @property
    def covariate_kind(self) -> str:
        return "gene" if self is Axis.DRIVER_GENE else "protein"


class EvidenceClass(Enum):
    NONE = "none"
    SUBSTANTIAL = "substantial"
    STRONG = "strong"
    DECISIVE = "decisive"


class GpHyperParams(BaseModel):
    """Hyperpriors shared by the GP and linear alternatives and the intercept null.

    tau^2 ~ Inverse-Gamma(nu0/2, nu0*tau0_sq/2), lambda ~ Exponential(rate lambda0).
    ``g`` defaults to the sample size when left unset.
    """

    nu0: float = Field(3.0, gt=0)
    tau0_sq: float = Field(1.0, gt=0)
    lambda0: float = Field(1.0, gt=0)
    g: float | None = Field(None, gt=0)

    def resolve_g(self, n: int) -> float:
        return float(n) if self.g is None else self.g


class QuadratureConfig(BaseModel):
    nodes: int = Field(64, ge=8)
    check_nodes: int = Field(96, ge=8)
    rel_tol: float = Field(1e-6, gt=0)
    fallback_span: float = Field(50.0, gt=0, description="upper limit in units of 1/lambda0")
    max_evaluations: int = Field(20_000, ge=100)


@dataclass(frozen=True)
class LbfConstants:
    """Data-size dependent constants shared by every marginal likelihood."""

    n: int
    b_n: float
    a: float
    c_n: float
    g: float
    log_normalizer: float

    @classmethod
    def build(cls, n: int, hyper: GpHyperParams) -> "LbfConstants":
        g = hyper.resolve_g(n)
        a = hyper.nu0 * hyper.tau0_sq
        b_n = (n + hyper.nu0) / 2.0
        log_normalizer = (
            -0.5 * n * math.log(2.0 * math.pi)
            + 0.5 * hyper.nu0 * math.log(a / 2.0)
            - gammaln(hyper.nu0 / 2.0)
            + gammaln(b_n)
        )
        return cls(n=n, b_n=b_n, a=a, c_n=n + 1.0 + 1.0 / g, g=g, log_normalizer=log_normalizer)


@dataclass(frozen=True)
class GpMarginal:
    log_marginal: float
    quad_error: float
    nodes_used: int
    method: str
    tau_sq_hat: float


@dataclass(frozen=True)
class MechanisticResult:
    biomarker_id: str
    axis: Axis
    lbf: float
    evidence_class: EvidenceClass
    quad_error: float
    nodes_used: int
    method: str
    tau_sq_hat: float
    n_inputs: int

    @property
    def covariate_kind(self) -> str:
        return self.axis.covariate_kind

    def to_row(self) -> dict:
        return {
            "biomarker_id": self.biomarker_id,
            "axis": self.axis.value,
            "lbf": self.lbf,
            "evidence_class": self.evidence_class.value,
            "quad_error": self.quad_error,
            "tau_sq_hat": self.tau_sq_hat,
        }


@dataclass(frozen=True)
class SuiteFailure:
    biomarker_id: str
    axis: Axis
    error: str


@dataclass(frozen=True)
class SuiteResult:
    results: tuple[MechanisticResult, ...]
    failures: tuple[SuiteFailure, ...] = ()
