"""Replicated simulation studies: calibration benefit, GP vs linear evidence, EM vs MCMC.

Every replicate draws from its own stream derived from the scenario seed and
the replicate coordinates, so tables do not depend on ``jobs`` or on the
order in which workers finish.
"""

import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from fibag.calibration.calibrate import calibrate_all, uniform_priors
from fibag.calibration.models import AggregationScheme
from fibag.cbvs.engine import fit_cbvs
from fibag.cbvs.models import Algorithm, CbvsConfig
from fibag.errors import FibagError
from fibag.mechanistic.gp import log_bayes_factor, log_bayes_factor_linear
from fibag.mechanistic.models import EvidenceClass, GpHyperParams
from fibag.mechanistic.suite import run_mechanistic_suite
from fibag.selection.fdr import select_fdr
from fibag.simulation.generators import (
    calibrate_xi,
    generate_nonlinear,
    generate_sim1,
    sim1_biomarker_map,
)
from fibag.simulation.metrics import compute_metrics
from fibag.simulation.models import Method, ScenarioConfig, ScenarioKind, Sim1Layout
from fibag.utils.seeds import derive_seed

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("auc", "auc20", "tpr", "fpr", "mcc")
_DATA_STREAM, _FIT_STREAM, _XI_STREAM = 0, 1, 2


@dataclass(frozen=True)
class ReplicateFailure:
    n: int
    replicate: int
    error: str

    def to_row(self) -> dict:
        return {"n": self.n, "replicate": self.replicate, "error": self.error}


@dataclass(frozen=True)
class ScenarioReport:
    """Per-replicate table, its summary and the failure ledger of one scenario."""

    kind: ScenarioKind
    table: pd.DataFrame
    summary: pd.DataFrame
    failures: tuple[ReplicateFailure, ...] = ()
    xi: dict[EvidenceClass, float] = field(default_factory=dict)

    def long_table(self) -> pd.DataFrame:
        """Plot-ready long format: one row per (replicate, measure)."""
        ids = [c for c in ("method", "level", "n", "replicate") if c in self.table.columns]
        values = [c for c in self.table.columns if c not in ids and c != "seed"]
        return self.table.melt(id_vars=ids, value_vars=values, var_name="metric")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "xi": {level.value: value for level, value in self.xi.items()},
            "summary": self.summary.to_dict(orient="records"),
            "failures": [f.to_row() for f in self.failures],
        }


@dataclass(frozen=True)
class _Sim1Task:
    n: int
    replicate: int
    layout: Sim1Layout
    xi: Mapping[EvidenceClass, float]
    scenario: ScenarioConfig


def _pool_map(func: Callable, tasks: Sequence, jobs: int) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, tasks))
    return [func(task) for task in tasks]


def _fit_config(scenario: ScenarioConfig, algorithm: Algorithm, seed: int) -> CbvsConfig:
    return scenario.cbvs.model_copy(update={"algorithm": algorithm, "seed": seed})


def _simulate_with_evidence(task: _Sim1Task):
    scenario = task.scenario
    data_seed = derive_seed(scenario.seed, task.n, task.replicate, _DATA_STREAM)
    ds, truth = generate_sim1(task.n, task.layout, task.xi, data_seed)
    ds = ds.with_centering()
    suite = run_mechanistic_suite(ds, sim1_biomarker_map(task.layout.p), scenario.hyper)
    return ds, truth, suite, data_seed


def _priors(method: Method, suite, ds, aggregation: AggregationScheme):
    if method is Method.CALIBRATED:
        return calibrate_all(suite.results, aggregation, ds.selectable_ids)
    return uniform_priors(ds.selectable_ids)


def _run_sim1_replicate(task: _Sim1Task) -> list[dict] | ReplicateFailure:
    scenario = task.scenario
    try:
        ds, truth, suite, data_seed = _simulate_with_evidence(task)
        cfg = _fit_config(
            scenario, scenario.algorithm,
            derive_seed(scenario.seed, task.n, task.replicate, _FIT_STREAM),
        )
        rows = []
        for method in scenario.methods:
            fit = fit_cbvs(ds, _priors(method, suite, ds, scenario.aggregation), cfg)
            selection = select_fdr(fit.pip, scenario.alpha, scenario.fdr_rule, fit.covariate_ids)
            metrics = compute_metrics(truth.active, fit.pip, selection.selected_mask)
            rows.append({
                "method": method.value,
                "n": task.n,
                "replicate": task.replicate,
                "seed": data_seed,
                **metrics.to_row(),
                "n_selected": selection.j_star,
            })
        return rows
    except (FibagError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return ReplicateFailure(task.n, task.replicate, f"{type(exc).__name__}: {exc}")


def _run_agreement_replicate(task: _Sim1Task) -> list[dict] | ReplicateFailure:
    scenario = task.scenario
    try:
        ds, _, suite, data_seed = _simulate_with_evidence(task)
        priors = _priors(Method.CALIBRATED, suite, ds, scenario.aggregation)
        fit_seed = derive_seed(scenario.seed, task.n, task.replicate, _FIT_STREAM)
        mcmc = fit_cbvs(ds, priors, _fit_config(scenario, Algorithm.GIBBS, fit_seed))
        em = fit_cbvs(ds, priors, _fit_config(scenario, Algorithm.EMVS, fit_seed))
        offset = mcmc.n_fixed
        diff = mcmc.beta_raw[offset:] - em.beta_raw[offset:]
        return [{
            "n": task.n,
            "replicate": task.replicate,
            "seed": data_seed,
            "msd": float(np.mean(diff**2)),
            "em_iterations": em.em_iterations,
        }]
    except (FibagError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return ReplicateFailure(task.n, task.replicate, f"{type(exc).__name__}: {exc}")


def _collect(outcomes: Iterable) -> tuple[list[dict], tuple[ReplicateFailure, ...]]:
    rows: list[dict] = []
    failures: list[ReplicateFailure] = []
    for outcome in outcomes:
        if isinstance(outcome, ReplicateFailure):
            logger.warning("replicate %d at n=%d failed: %s",
                           outcome.replicate, outcome.n, outcome.error)
            failures.append(outcome)
        else:
            rows.extend(outcome)
    failures.sort(key=lambda f: (f.n, f.replicate))
    return rows, tuple(failures)


def resolve_xi(scenario: ScenarioConfig) -> dict[EvidenceClass, float]:
    """Scenario xi values, or a fresh calibration at the first sample size."""
    if scenario.xi is not None:
        return {EvidenceClass.NONE: 0.0, **scenario.xi}
    return calibrate_xi(
        scenario.xi_targets,
        n=scenario.n[0],
        hyper=scenario.hyper,
        seed=derive_seed(scenario.seed, _XI_STREAM),
        replicates=scenario.xi_replicates,
    )


def aggregate_metrics(table: pd.DataFrame, by: Sequence[str] = ("method", "n")) -> pd.DataFrame:
    """Median and inter-quartile range of every metric per group."""
    by = [column for column in by if column in table.columns]
    metrics = [c for c in table.columns if c not in (*by, "replicate", "seed")]
    grouped = table.groupby(by, sort=True)[metrics]
    summary = grouped.median().add_suffix("_median")
    iqr = (grouped.quantile(0.75) - grouped.quantile(0.25)).add_suffix("_iqr")
    counts = grouped.size().rename("replicates")
    columns = [f"{m}_{stat}" for m in metrics for stat in ("median", "iqr")]
    return pd.concat([counts, summary, iqr], axis=1)[["replicates", *columns]].reset_index()


def run_benchmark(
    scenario: ScenarioConfig,
    *,
    layout: Sim1Layout | None = None,
    xi: Mapping[EvidenceClass, float] | None = None,
    jobs: int = 1,
) -> ScenarioReport:
    """Calibrated against uniform-prior fits on replicated first-design data."""
    layout = layout or Sim1Layout(p=scenario.p)
    xi = dict(xi) if xi is not None else resolve_xi(scenario)
    tasks = [
        _Sim1Task(n, r, layout, xi, scenario)
        for n in scenario.n
        for r in range(scenario.replicates)
    ]
    logger.info("Benchmark: %d replicates x %d sample sizes, methods %s, %s",
                scenario.replicates, len(scenario.n),
                ", ".join(m.value for m in scenario.methods), scenario.algorithm.value)
    rows, failures = _collect(_pool_map(_run_sim1_replicate, tasks, jobs))

    method_rank = {m.value: i for i, m in enumerate(Method)}
    rows.sort(key=lambda row: (method_rank[row["method"]], row["n"], row["replicate"]))
    table = pd.DataFrame(
        rows,
        columns=["method", "n", "replicate", "seed", *METRIC_COLUMNS, "n_selected"],
    )
    summary = aggregate_metrics(table) if rows else pd.DataFrame()
    return ScenarioReport(ScenarioKind.SIM1, table, summary, failures, xi)


def _nonlinear_lbfs(args: tuple[int, int, int, int, GpHyperParams]) -> dict:
    level, replicate, n, seed, hyper = args
    sample = generate_nonlinear(level, n, seed)
    y = sample.y - sample.y.mean()
    return {
        "level": level,
        "replicate": replicate,
        "seed": seed,
        "lbf_gp": log_bayes_factor(y, sample.x, hyper),
        "lbf_linear": log_bayes_factor_linear(y, sample.x, hyper),
    }


def run_nonlinearity_study(
    levels: Sequence[int],
    replicates: int,
    n: int,
    seed: int,
    hyper: GpHyperParams | None = None,
    *,
    jobs: int = 1,
) -> ScenarioReport:
    """GP and linear lBFs per nonlinearity level, long table ``level,replicate,lbf_gp,lbf_linear``."""
    hyper = hyper or GpHyperParams()
    tasks = [
        (level, r, n, derive_seed(seed, level, r), hyper)
        for level in sorted(set(levels))
        for r in range(replicates)
    ]
    logger.info("Nonlinearity study: levels %s, %d replicates at n=%d",
                sorted(set(levels)), replicates, n)
    table = pd.DataFrame(_pool_map(_nonlinear_lbfs, tasks, jobs))
    table["lbf_diff"] = table["lbf_gp"] - table["lbf_linear"]
    summary = (
        table.groupby("level")[["lbf_gp", "lbf_linear", "lbf_diff"]]
        .median()
        .add_suffix("_median")
        .reset_index()
    )
    return ScenarioReport(ScenarioKind.NONLINEAR, table, summary)


def run_agreement_study(
    n_grid: Sequence[int],
    replicates: int,
    seed: int,
    scenario: ScenarioConfig | None = None,
    *,
    layout: Sim1Layout | None = None,
    xi: Mapping[EvidenceClass, float] | None = None,
    jobs: int = 1,
) -> ScenarioReport:
    """Mean squared difference between Gibbs and EM coefficient estimates per replicate."""
    scenario = (scenario or ScenarioConfig(seed=seed)).model_copy(
        update={"n": list(n_grid), "replicates": replicates, "seed": seed}
    )
    layout = layout or Sim1Layout(p=scenario.p)
    xi = dict(xi) if xi is not None else resolve_xi(scenario)
    tasks = [_Sim1Task(n, r, layout, xi, scenario) for n in n_grid for r in range(replicates)]
    logger.info("Agreement study: n in %s, %d replicates", list(n_grid), replicates)
    rows, failures = _collect(_pool_map(_run_agreement_replicate, tasks, jobs))
    rows.sort(key=lambda row: (row["n"], row["replicate"]))
    table = pd.DataFrame(rows, columns=["n", "replicate", "seed", "msd", "em_iterations"])
    summary = (
        table.groupby("n")["msd"].agg(["mean", "median", "max"]).add_prefix("msd_").reset_index()
        if rows
        else pd.DataFrame()
    )
    return ScenarioReport(ScenarioKind.AGREEMENT, table, summary, failures, xi)


def run_scenario(scenario: ScenarioConfig, *, jobs: int = 1) -> ScenarioReport:
    match scenario.kind:
        case ScenarioKind.SIM1:
            return run_benchmark(scenario, jobs=jobs)
        case ScenarioKind.NONLINEAR:
            return run_nonlinearity_study(
                scenario.levels, scenario.replicates, scenario.n[0], scenario.seed,
                scenario.hyper, jobs=jobs,
            )
        case ScenarioKind.AGREEMENT:
            return run_agreement_study(
                scenario.n, scenario.replicates, scenario.seed, scenario, jobs=jobs
            )
