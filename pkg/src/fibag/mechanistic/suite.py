"""Run every applicable mechanistic axis over a biomarker map."""

import logging
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from fibag.data.models import BiomarkerMap, OmicsDataset
from fibag.errors import DataFormatError, FibagError
from fibag.mechanistic.gp import LN10, classify_evidence, integrate_gp_evidence, log_marginal_null
from fibag.mechanistic.models import (
    Axis,
    EvidenceClass,
    GpHyperParams,
    MechanisticResult,
    QuadratureConfig,
    SuiteFailure,
    SuiteResult,
)

logger = logging.getLogger(__name__)

AXIS_ORDER = {axis: i for i, axis in enumerate(Axis)}


@dataclass(frozen=True)
class _AxisTask:
    biomarker_id: str
    axis: Axis
    y: np.ndarray
    x: np.ndarray


def _tasks(ds: OmicsDataset, biomarkers: BiomarkerMap) -> list[_AxisTask]:
    tasks: list[_AxisTask] = []
    for gene in biomarkers.genes:
        tasks.append(
            _AxisTask(
                gene.gene_id, Axis.DRIVER_GENE,
                ds.genes[:, gene.gene_index], ds.upstream[:, list(gene.upstream)],
            )
        )
    for protein in biomarkers.proteins:
        y = ds.proteins[:, protein.protein_index]
        upstream = ds.upstream[:, list(protein.upstream)]
        tasks.append(_AxisTask(protein.protein_id, Axis.DRIVER_PROTEIN, y, upstream))
        if protein.has_cascade:
            x = np.column_stack([ds.genes[:, protein.coding_gene], upstream])
            tasks.append(_AxisTask(protein.protein_id, Axis.CASCADING_PROTEIN, y, x))
    return tasks


def _evaluate(
    task: _AxisTask, hyper: GpHyperParams, quad: QuadratureConfig
) -> MechanisticResult | SuiteFailure:
    try:
        marginal = integrate_gp_evidence(task.y, task.x, hyper, quad)
        lbf = (marginal.log_marginal - log_marginal_null(task.y, hyper)) / LN10
        return MechanisticResult(
            biomarker_id=task.biomarker_id,
            axis=task.axis,
            lbf=lbf,
            evidence_class=classify_evidence(lbf),
            quad_error=marginal.quad_error,
            nodes_used=marginal.nodes_used,
            method=marginal.method,
            tau_sq_hat=marginal.tau_sq_hat,
            n_inputs=task.x.shape[1],
        )
    except (FibagError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return SuiteFailure(task.biomarker_id, task.axis, f"{type(exc).__name__}: {exc}")


def _sort_key(item: MechanisticResult | SuiteFailure) -> tuple[int, str]:
    return AXIS_ORDER[item.axis], item.biomarker_id


def run_mechanistic_suite(
    ds: OmicsDataset,
    biomarkers: BiomarkerMap,
    hyper: GpHyperParams | None = None,
    quad: QuadratureConfig | None = None,
    *,
    jobs: int = 1,
) -> SuiteResult:
    """Score each (biomarker, axis) pair; numerical failures go to the ledger.

    Results are sorted by axis then biomarker id, so the output does not depend
    on map order or on ``jobs``.
    """
    ds.require_centered()
    hyper = hyper or GpHyperParams()
    quad = quad or QuadratureConfig()
    tasks = _tasks(ds, biomarkers)
    logger.info("Running %d mechanistic models over %d biomarkers", len(tasks), len(biomarkers))

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(
                pool.map(_evaluate, tasks, [hyper] * len(tasks), [quad] * len(tasks))
            )
    else:
        outcomes = [_evaluate(t, hyper, quad) for t in tasks]

    results = sorted((o for o in outcomes if isinstance(o, MechanisticResult)), key=_sort_key)
    failures = sorted((o for o in outcomes if isinstance(o, SuiteFailure)), key=_sort_key)
    for failure in failures:
        logger.warning("%s (%s) failed: %s", failure.biomarker_id, failure.axis.value, failure.error)
    logger.info("Mechanistic suite done: %d results, %d failures", len(results), len(failures))
    return SuiteResult(results=tuple(results), failures=tuple(failures))


def summarize_evidence(results: Iterable[MechanisticResult]) -> pd.DataFrame:
    """Counts per axis and evidence class in long format, zero cells included."""
    counts = {(axis, evidence): 0 for axis in Axis for evidence in EvidenceClass}
    for result in results:
        counts[result.axis, result.evidence_class] += 1
    return pd.DataFrame(
        [
            {"axis": axis.value, "evidence_class": evidence.value, "count": count}
            for (axis, evidence), count in counts.items()
        ]
    )


def results_from_table(table: pd.DataFrame) -> list[MechanisticResult]:
    """Rebuild results from a written ``mechanistic.csv`` table."""
    missing = {"biomarker_id", "axis", "lbf"} - set(table.columns)
    if missing:
        raise DataFormatError(f"evidence table lacks columns: {', '.join(sorted(missing))}")
    results = []
    for row in table.itertuples(index=False):
        try:
            axis = Axis(row.axis)
        except ValueError:
            raise DataFormatError(f"unknown axis {row.axis!r} for {row.biomarker_id!r}") from None
        try:
            lbf = float(row.lbf)
        except (TypeError, ValueError):
            raise DataFormatError(f"non-numeric lbf {row.lbf!r} for {row.biomarker_id!r}") from None
        results.append(
            MechanisticResult(
                biomarker_id=str(row.biomarker_id),
                axis=axis,
                lbf=lbf,
                evidence_class=classify_evidence(lbf),
                quad_error=float(getattr(row, "quad_error", 0.0)),
                nodes_used=0,
                method="table",
                tau_sq_hat=float(getattr(row, "tau_sq_hat", float("nan"))),
                n_inputs=0,
            )
        )
    return sorted(results, key=_sort_key)
