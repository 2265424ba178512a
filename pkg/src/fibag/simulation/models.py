"""Layouts, truth records and scenario settings for the simulation studies."""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field, model_validator

from fibag.calibration.models import AggregationScheme
from fibag.cbvs.models import Algorithm, CbvsConfig
from fibag.mechanistic.models import EvidenceClass, GpHyperParams
from fibag.selection.fdr import FdrRule, FdrRuleField


class EffectBand(Enum):
    NONE = "none"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def bounds(self) -> tuple[float, float]:
        return _BAND_BOUNDS[self]


_BAND_BOUNDS = {
    EffectBand.NONE: (0.0, 0.0),
    EffectBand.LOW: (0.0, 0.2),
    EffectBand.MEDIUM: (0.4, 0.6),
    EffectBand.HIGH: (0.9, 1.1),
}

DEFAULT_XI_TARGETS = {
    EvidenceClass.NONE: 0.1,
    EvidenceClass.SUBSTANTIAL: 0.75,
    EvidenceClass.STRONG: 1.5,
    EvidenceClass.DECISIVE: 3.0,
}


@dataclass(frozen=True)
class Sim1Layout:
    """Covariate groups of the first simulation design.

    Four evidence classes of ``group_size`` covariates, each split into
    low/medium/high effect blocks, then one zero-effect block per class in
    ``decoys`` and nulls up to ``p``.
    """

    p: int = 200
    group_size: int = 15
    decoys: tuple[EvidenceClass, ...] = (EvidenceClass.STRONG, EvidenceClass.DECISIVE)
    decoy_size: int = 5

    def __post_init__(self) -> None:
        if self.group_size % 3:
            raise ValueError("group_size must split into three effect blocks")
        if self.p < self.n_structured:
            raise ValueError(f"p={self.p} is smaller than the {self.n_structured} structured covariates")

    @property
    def n_structured(self) -> int:
        return len(EvidenceClass) * self.group_size + len(self.decoys) * self.decoy_size

    @property
    def n_active(self) -> int:
        return len(EvidenceClass) * self.group_size

    def labels(self) -> tuple[tuple[EvidenceClass, ...], tuple[EffectBand, ...]]:
        block = self.group_size // 3
        evidence: list[EvidenceClass] = []
        bands: list[EffectBand] = []
        for level in EvidenceClass:
            for band in (EffectBand.LOW, EffectBand.MEDIUM, EffectBand.HIGH):
                evidence += [level] * block
                bands += [band] * block
        for level in self.decoys:
            evidence += [level] * self.decoy_size
            bands += [EffectBand.NONE] * self.decoy_size
        nulls = self.p - len(evidence)
        evidence += [EvidenceClass.NONE] * nulls
        bands += [EffectBand.NONE] * nulls
        return tuple(evidence), tuple(bands)


@dataclass(frozen=True)
class Sim1Truth:
    evidence: tuple[EvidenceClass, ...]
    bands: tuple[EffectBand, ...]
    xi: np.ndarray
    beta: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return self.beta != 0


@dataclass(frozen=True)
class NonlinearSample:
    x: np.ndarray
    y: np.ndarray
    level: int


@dataclass(frozen=True)
class SimMetrics:
    auc: float
    auc20: float
    tpr: float
    fpr: float
    mcc: float

    def to_row(self) -> dict:
        return {"auc": self.auc, "auc20": self.auc20, "tpr": self.tpr, "fpr": self.fpr, "mcc": self.mcc}


class Method(Enum):
    CALIBRATED = "cbvs-calibrated"
    UNCALIBRATED = "cbvs-uncalibrated"


class ScenarioKind(Enum):
    SIM1 = "sim1"
    NONLINEAR = "nonlinear"
    AGREEMENT = "agreement"


DESK_N_GRID = [50, 200, 800]
FULL_N_GRID = [50, 100, 200, 400, 800]


class ScenarioConfig(BaseModel):
    """Settings of one ``simulate`` run.

    ``xi`` maps evidence class names to mechanistic effect sizes; when
    omitted they are calibrated against ``xi_targets`` for the first ``n``.
    ``full_grid`` switches to the complete sample-size grid with 100
    replicates.
    """

    kind: ScenarioKind = ScenarioKind.SIM1
    n: list[int] = Field(default_factory=lambda: list(DESK_N_GRID), min_length=1)
    p: int = Field(200, ge=70)
    replicates: int = Field(20, ge=1)
    seed: int
    methods: list[Method] = Field(default_factory=lambda: list(Method), min_length=1)
    alpha: float = Field(0.1, gt=0, le=1)
    fdr_rule: FdrRuleField = FdrRule.CUMULATIVE_SUM
    algorithm: Algorithm = Algorithm.EMVS
    xi: dict[EvidenceClass, float] | None = None
    xi_targets: dict[EvidenceClass, float] = Field(default_factory=lambda: dict(DEFAULT_XI_TARGETS))
    xi_replicates: int = Field(50, ge=3)
    levels: list[int] = Field(default_factory=lambda: list(range(6)))
    full_grid: bool = False
    hyper: GpHyperParams = GpHyperParams()
    aggregation: AggregationScheme = AggregationScheme()
    cbvs: CbvsConfig = CbvsConfig(iterations=6_000, burn_in=1_000)

    @model_validator(mode="after")
    def _apply_grid(self) -> "ScenarioConfig":
        if any(n < 2 for n in self.n):
            raise ValueError("every sample size must be at least 2")
        if any(not 0 <= level <= 5 for level in self.levels):
            raise ValueError("nonlinearity levels must lie in 0..5")
        if self.full_grid:
            self.n = list(FULL_N_GRID)
            self.replicates = max(self.replicates, 100)
        return self
