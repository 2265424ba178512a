"""Ingestion of delimiter-separated matrices and outcome files."""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from fibag.data.models import (
    ContinuousOutcome,
    IngestConfig,
    OmicsDataset,
    Outcome,
    SurvivalOutcome,
    center_columns,
)
from fibag.errors import DataFormatError

logger = logging.getLogger(__name__)

_TAB_SUFFIXES = {".tsv", ".tab", ".txt"}


class EmptyIntersection(DataFormatError):
    """Raised when the input files share no sample ids."""


class NonNumericCell(DataFormatError):
    """Raised when a matrix cell cannot be parsed as a finite number."""

    def __init__(self, path: Path, sample_id: str, column: str, value: str) -> None:
        self.path = path
        self.sample_id = sample_id
        self.column = column
        self.value = value
        super().__init__(f"{path}: non-numeric cell {value!r} at row {sample_id!r}, column {column!r}")


class DuplicateSampleId(DataFormatError):
    """Raised when a file lists the same sample id twice."""


def _separator(path: Path, delimiter: str | None) -> str:
    if delimiter:
        return delimiter
    return "\t" if path.suffix.lower() in _TAB_SUFFIXES else ","


def read_matrix(path: Path, delimiter: str | None = None) -> pd.DataFrame:
    """Read a table with a header of feature ids and sample ids in column one.

    Every cell must parse as a finite number; "NA" and blanks are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")

    raw = pd.read_csv(
        path,
        sep=_separator(path, delimiter),
        dtype=str,
        keep_default_na=False,
        na_filter=False,
        index_col=0,
    )
    raw.index = raw.index.astype(str).str.strip()
    raw.columns = [str(c).strip() for c in raw.columns]

    duplicated = raw.index[raw.index.duplicated()]
    if len(duplicated):
        raise DuplicateSampleId(f"{path}: sample id {duplicated[0]!r} appears more than once")

    numeric = raw.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    values = numeric.to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise NonNumericCell(path, raw.index[row], raw.columns[col], raw.iat[row, col])

    return numeric.astype(float)


def read_outcome(path: Path, delimiter: str | None = None) -> pd.DataFrame:
    """Read ``sample_id,value`` or ``sample_id,time,event`` and return model-scale columns.

    Survival times are log-transformed here; the returned frame has either a
    ``y`` column or ``z`` and ``delta`` columns.
    """
    frame = read_matrix(path, delimiter)
    columns = [c.lower() for c in frame.columns]

    if columns == ["value"] or len(columns) == 1:
        return pd.DataFrame({"y": frame.iloc[:, 0]})

    if sorted(columns) == ["event", "time"]:
        frame.columns = columns
        if (frame["time"] <= 0).any():
            bad = frame.index[(frame["time"] <= 0).to_numpy()][0]
            raise DataFormatError(f"{path}: survival time for {bad!r} must be positive")
        events = frame["event"]
        if not events.isin([0.0, 1.0]).all():
            bad = frame.index[~events.isin([0.0, 1.0]).to_numpy()][0]
            raise DataFormatError(f"{path}: event indicator for {bad!r} must be 0 or 1")
        return pd.DataFrame({"z": np.log(frame["time"]), "delta": events})

    raise DataFormatError(
        f"{path}: outcome columns must be 'value' or 'time,event', got {list(frame.columns)}"
    )


def _outcome_from_frame(frame: pd.DataFrame) -> Outcome:
    if "y" in frame:
        return ContinuousOutcome(frame["y"].to_numpy())
    return SurvivalOutcome(frame["z"].to_numpy(), frame["delta"].to_numpy())


def load_dataset(config: IngestConfig) -> OmicsDataset:
    """Load, intersect and align every platform named in ``config``.

    Rows follow the gene file's order restricted to samples present in every
    file. Dropped sample ids are logged and kept on the dataset.
    """
    delimiter = config.delimiter
    genes = read_matrix(config.genes, delimiter)
    upstream = {label: read_matrix(path, delimiter) for label, path in config.upstream.items()}
    proteins = read_matrix(config.proteins, delimiter) if config.proteins else None
    covariates = read_matrix(config.covariates, delimiter) if config.covariates else None
    outcome = read_outcome(config.outcome, delimiter)

    frames = [genes, *upstream.values(), outcome]
    frames += [f for f in (proteins, covariates) if f is not None]

    shared = set(genes.index)
    every = set(genes.index)
    for frame in frames[1:]:
        shared &= set(frame.index)
        every |= set(frame.index)
    common = [s for s in genes.index if s in shared]
    if not common:
        raise EmptyIntersection("input files share no sample ids")

    dropped = tuple(sorted(every - shared))
    if dropped:
        logger.warning(
            "Dropped %d sample(s) not present in every file: %s",
            len(dropped), ", ".join(dropped[:10]) + (" ..." if len(dropped) > 10 else ""),
        )

    upstream_blocks = [frame.loc[common] for frame in upstream.values()]
    upstream_values = np.hstack([b.to_numpy() for b in upstream_blocks])
    upstream_ids = tuple(c for b in upstream_blocks for c in b.columns)
    upstream_platforms = tuple(
        label for label, b in zip(upstream, upstream_blocks) for _ in b.columns
    )

    gene_values = genes.loc[common].to_numpy()
    protein_values = proteins.loc[common].to_numpy() if proteins is not None else np.empty((len(common), 0))
    covariate_values = covariates.loc[common].to_numpy() if covariates is not None else None

    if config.center_genes:
        gene_values = center_columns(gene_values)
    if config.center_proteins:
        protein_values = center_columns(protein_values)
    if config.center_covariates and covariate_values is not None:
        covariate_values = center_columns(covariate_values)

    dataset = OmicsDataset(
        sample_ids=tuple(common),
        upstream=upstream_values,
        upstream_ids=upstream_ids,
        upstream_platforms=upstream_platforms,
        genes=gene_values,
        gene_ids=tuple(genes.columns),
        proteins=protein_values,
        protein_ids=tuple(proteins.columns) if proteins is not None else (),
        outcome=_outcome_from_frame(outcome.loc[common]),
        covariates=covariate_values,
        covariate_ids=tuple(covariates.columns) if covariates is not None else (),
        genes_centered=config.center_genes,
        proteins_centered=config.center_proteins,
        covariates_centered=config.center_covariates and covariate_values is not None,
        dropped_samples=dropped,
    )
    logger.info(
        "Loaded %d samples: %d upstream, %d genes, %d proteins, %d covariates (%s outcome)",
        dataset.n, len(upstream_ids), len(dataset.gene_ids), len(dataset.protein_ids),
        dataset.n_covariates, dataset.outcome.kind.value,
    )
    return dataset
