"""Typed containers for sample-aligned multi-platform data and the cis-map."""

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field

from fibag.errors import DataFormatError

CENTERING_TOLERANCE = 1e-10


class MissingValue(DataFormatError):
    """Raised when a matrix or outcome holds a non-finite entry."""


class ShapeMismatch(DataFormatError):
    """Raised when matrices disagree on the sample dimension."""


class NotCentered(DataFormatError):
    """Raised when an operation needs centered columns and gets raw ones."""


class OutcomeKind(Enum):
    CONTINUOUS = "continuous"
    SURVIVAL = "survival"


def center_columns(matrix: np.ndarray) -> np.ndarray:
    """Subtract each column mean; shape is preserved and constant columns become zero."""
    values = np.asarray(matrix, dtype=float)
    if values.size == 0:
        return values.copy()
    return values - values.mean(axis=0, keepdims=True)


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != ndim:
        raise ShapeMismatch(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MissingValue(f"{name}: non-finite entries are not allowed")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ContinuousOutcome:
    y: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "y", _frozen(self.y, 1, "outcome y"))

    @property
    def kind(self) -> OutcomeKind:
        return OutcomeKind.CONTINUOUS

    @property
    def response(self) -> np.ndarray:
        return self.y


@dataclass(frozen=True)
class SurvivalOutcome:
    """Log-scale observed times ``z`` with event indicators (1 = event observed)."""

    z: np.ndarray
    delta: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", _frozen(self.z, 1, "outcome z"))
        delta = _frozen(self.delta, 1, "outcome delta")
        if delta.shape != self.z.shape:
            raise ShapeMismatch("outcome z and delta differ in length")
        if not np.all((delta == 0) | (delta == 1)):
            raise DataFormatError("event indicators must be 0 or 1")
        object.__setattr__(self, "delta", delta)

    @property
    def kind(self) -> OutcomeKind:
        return OutcomeKind.SURVIVAL

    @property
    def response(self) -> np.ndarray:
        return self.z

    @property
    def censored(self) -> np.ndarray:
        return self.delta == 0


Outcome = ContinuousOutcome | SurvivalOutcome


@dataclass(frozen=True)
class OmicsDataset:
    """Sample-aligned upstream, gene, protein and covariate matrices plus an outcome.

    Upstream columns keep their platform label (e.g. "cna", "meth").
    Arrays are read-only; derive modified datasets with :meth:`with_centering`.
    """

    sample_ids: tuple[str, ...]
    upstream: np.ndarray
    upstream_ids: tuple[str, ...]
    upstream_platforms: tuple[str, ...]
    genes: np.ndarray
    gene_ids: tuple[str, ...]
    proteins: np.ndarray
    protein_ids: tuple[str, ...]
    outcome: Outcome
    covariates: np.ndarray | None = None
    covariate_ids: tuple[str, ...] = ()
    genes_centered: bool = False
    proteins_centered: bool = False
    covariates_centered: bool = False
    dropped_samples: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        n = len(self.sample_ids)
        blocks = {
            "upstream": (self.upstream, self.upstream_ids),
            "genes": (self.genes, self.gene_ids),
            "proteins": (self.proteins, self.protein_ids),
        }
        if self.covariates is not None:
            blocks["covariates"] = (self.covariates, self.covariate_ids)
        for name, (values, ids) in blocks.items():
            arr = _frozen(values, 2, name)
            if arr.shape == (0, 0):
                arr = np.empty((n, 0))
                arr.setflags(write=False)
            if arr.shape[0] != n:
                raise ShapeMismatch(f"{name}: {arr.shape[0]} rows, expected {n}")
            if arr.shape[1] != len(ids):
                raise ShapeMismatch(f"{name}: {arr.shape[1]} columns but {len(ids)} ids")
            object.__setattr__(self, name, arr)
        if len(self.upstream_platforms) != len(self.upstream_ids):
            raise ShapeMismatch("every upstream column needs a platform label")
        design_ids = self.gene_ids + self.protein_ids + tuple(self.covariate_ids)
        if len(set(design_ids)) != len(design_ids):
            raise DataFormatError("gene, protein and covariate ids must be distinct")
        if len(set(self.sample_ids)) != n:
            raise DataFormatError("sample ids must be unique")
        if self.outcome.response.shape != (n,):
            raise ShapeMismatch(f"outcome has {self.outcome.response.shape[0]} entries, expected {n}")

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    @property
    def upstream_labels(self) -> tuple[str, ...]:
        """Platform-qualified upstream column names, ``platform:feature``."""
        return tuple(f"{p}:{c}" for p, c in zip(self.upstream_platforms, self.upstream_ids))

    @property
    def n_covariates(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]

    @property
    def selectable_ids(self) -> tuple[str, ...]:
        """Identifiers of the spike-and-slab covariates, genes first then proteins."""
        return self.gene_ids + self.protein_ids

    def with_centering(
        self, *, genes: bool = True, proteins: bool = True, covariates: bool = True
    ) -> "OmicsDataset":
        changes: dict = {}
        if genes and not self.genes_centered:
            changes.update(genes=center_columns(self.genes), genes_centered=True)
        if proteins and not self.proteins_centered:
            changes.update(proteins=center_columns(self.proteins), proteins_centered=True)
        if covariates and self.covariates is not None and not self.covariates_centered:
            changes.update(covariates=center_columns(self.covariates), covariates_centered=True)
        return replace(self, **changes) if changes else self

    def with_outcome(self, outcome: Outcome) -> "OmicsDataset":
        return replace(self, outcome=outcome)

    def require_centered(self) -> None:
        for name, flag, values in (
            ("genes", self.genes_centered, self.genes),
            ("proteins", self.proteins_centered, self.proteins),
        ):
            if not flag:
                raise NotCentered(f"{name} matrix must be mean-centered")
            if values.size and np.max(np.abs(values.mean(axis=0))) >= CENTERING_TOLERANCE:
                raise NotCentered(f"{name} flagged centered but column means exceed tolerance")


@dataclass(frozen=True)
class GeneEntry:
    gene_id: str
    gene_index: int
    upstream: tuple[int, ...]


@dataclass(frozen=True)
class ProteinEntry:
    protein_id: str
    protein_index: int
    coding_gene: int | None
    upstream: tuple[int, ...]

    @property
    def has_cascade(self) -> bool:
        return self.coding_gene is not None


@dataclass(frozen=True)
class BiomarkerMap:
    """Cis-correspondence of genes and proteins to upstream columns."""

    genes: tuple[GeneEntry, ...] = ()
    proteins: tuple[ProteinEntry, ...] = ()

    def __len__(self) -> int:
        return len(self.genes) + len(self.proteins)


class IngestConfig(BaseModel):
    """Where the matrices live and how to prepare them."""

    upstream: dict[str, Path] = Field(min_length=1, description="platform label -> matrix file")
    genes: Path
    proteins: Path | None = None
    covariates: Path | None = None
    outcome: Path
    biomarker_map: Path | None = None
    delimiter: str | None = None
    center_genes: bool = True
    center_proteins: bool = True
    center_covariates: bool = True
