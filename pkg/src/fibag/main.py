"""Command-line entry point: ``fibag <command> [options]``.

Commands write fixed file names under ``--out``. ``pipeline`` runs
mechanistic, calibrate, cbvs and fdr in order, each stage reading the files
the previous one wrote, so it produces the same files as the four commands
run by hand.
"""

import argparse
import logging
import platform
import sys
import time
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from fibag import __version__
from fibag.calibration.calibrate import UnknownCovariate, calibrate, calibrate_all, uniform_priors
from fibag.calibration.models import CalibratedPrior
from fibag.cbvs.engine import fit_cbvs
from fibag.cbvs.models import Algorithm
from fibag.config import (
    STOCHASTIC_ALGORITHMS,
    PipelineConfig,
    Settings,
    load_pipeline_config,
    load_scenario,
)
from fibag.data.biomarker_map import load_biomarker_map
from fibag.data.loader import load_dataset
from fibag.data.models import IngestConfig, OmicsDataset
from fibag.errors import (
    EXIT_DATA_FORMAT,
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    FibagError,
    NumericalError,
    UsageError,
)
from fibag.mechanistic.suite import results_from_table, run_mechanistic_suite, summarize_evidence
from fibag.selection.fdr import RULE_ALIASES, FdrRule, select_fdr
from fibag.simulation.benchmark import run_scenario
from fibag.utils.io import numeric_column, read_csv, require_columns, write_csv, write_json

logger = logging.getLogger(__name__)

MECHANISTIC_CSV = "mechanistic.csv"
MECHANISTIC_JSON = "mechanistic.json"
EVIDENCE_SUMMARY_CSV = "evidence_summary.csv"
PRIORS_CSV = "priors.csv"
FIT_JSON = "fit.json"
FIT_CSV = "fit.csv"
SELECTION_CSV = "selection.csv"
SELECTION_JSON = "selection.json"
METRICS_CSV = "metrics.csv"
METRICS_JSON = "metrics.json"
METRICS_LONG_CSV = "metrics_long.csv"
METRICS_SUMMARY_CSV = "metrics_summary.csv"
MANIFEST_JSON = "manifest.json"
TIMINGS_JSON = "run_timings.json"

_VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "scikit-learn", "pydantic", "pydantic-settings")
_RESULT_COLUMNS = ("biomarker_id", "axis", "lbf", "evidence_class", "quad_error", "tau_sq_hat")
_SELECTION_COLUMNS = ("covariate_id", "pip", "p", "cum_stat", "selected")
_EVIDENCE_COLUMNS = ("biomarker_id", "axis", "lbf")
_PRIOR_COLUMNS = ("covariate_id", "s")
_FIT_COLUMNS = ("covariate_id", "pip")


class AllBiomarkersFailed(NumericalError):
    """Raised when every mechanistic model in a suite failed."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- stages -----------------------------------------------------------------


def _require_data(config: PipelineConfig) -> IngestConfig:
    if config.data is None:
        raise UsageError("this command needs a [data] section in the config")
    return config.data


def stage_mechanistic(config: PipelineConfig) -> list[Path]:
    data = _require_data(config)
    if data.biomarker_map is None:
        raise UsageError("data.biomarker_map is required for the mechanistic suite")
    ds = load_dataset(data)
    biomarkers = load_biomarker_map(data.biomarker_map, ds)
    suite = run_mechanistic_suite(ds, biomarkers, config.hyper, config.quadrature, jobs=config.jobs)
    if not suite.results and suite.failures:
        raise AllBiomarkersFailed(f"all {len(suite.failures)} mechanistic models failed")

    out = config.out_dir
    rows = [r.to_row() for r in suite.results]
    return [
        write_csv(pd.DataFrame(rows, columns=list(_RESULT_COLUMNS)), out / MECHANISTIC_CSV),
        write_json(
            {
                "results": rows,
                "failures": [
                    {"biomarker_id": f.biomarker_id, "axis": f.axis, "error": f.error}
                    for f in suite.failures
                ],
            },
            out / MECHANISTIC_JSON,
        ),
        write_csv(summarize_evidence(suite.results), out / EVIDENCE_SUMMARY_CSV),
    ]


def stage_calibrate(config: PipelineConfig, evidence: Path | None = None) -> list[Path]:
    ds = load_dataset(_require_data(config))
    evidence = evidence or config.out_dir / MECHANISTIC_CSV
    results = results_from_table(read_csv(evidence))
    priors = calibrate_all(results, config.aggregation, ds.selectable_ids, config.calibration)
    return [write_csv([p.to_row() for p in priors], config.out_dir / PRIORS_CSV)]


def _priors_from_table(
    path: Path, ds: OmicsDataset, config: PipelineConfig
) -> list[CalibratedPrior]:
    """Priors from a ``priors.csv`` table, or calibrated from a ``mechanistic.csv`` one."""
    table = read_csv(path)
    if set(_EVIDENCE_COLUMNS) <= set(table.columns):
        logger.info("%s holds mechanistic evidence, calibrating it", path)
        results = results_from_table(table)
        return calibrate_all(results, config.aggregation, ds.selectable_ids, config.calibration)

    require_columns(table, _PRIOR_COLUMNS, path)
    evidence = dict(zip(table["covariate_id"].astype(str), numeric_column(table, "s", path)))
    unknown = sorted(set(evidence) - set(ds.selectable_ids))
    if unknown:
        raise UnknownCovariate(f"priors name covariates outside the dataset: {', '.join(unknown)}")
    missing = [c for c in ds.selectable_ids if c not in evidence]
    if missing:
        logger.warning("%d covariate(s) without evidence get uniform priors", len(missing))
    return [calibrate(evidence.get(c, 0.0), config.calibration, c) for c in ds.selectable_ids]


def stage_cbvs(config: PipelineConfig, priors_path: Path | None = None) -> list[Path]:
    ds = load_dataset(_require_data(config))
    priors_path = priors_path or config.out_dir / PRIORS_CSV
    if priors_path.is_file():
        priors = _priors_from_table(priors_path, ds, config)
    else:
        logger.warning("No priors at %s, fitting with uniform priors", priors_path)
        priors = uniform_priors(ds.selectable_ids)

    cfg = config.cbvs
    if cfg.algorithm in STOCHASTIC_ALGORITHMS:
        cfg = cfg.model_copy(update={"seed": config.require_seed("cbvs")})
    else:
        cfg = cfg.model_copy(update={"seed": config.seed})
    fit = fit_cbvs(ds, priors, cfg)
    return [
        write_json(fit.to_dict(), config.out_dir / FIT_JSON),
        write_csv(fit.summary_rows(), config.out_dir / FIT_CSV),
    ]


def stage_fdr(config: PipelineConfig, fit_path: Path | None = None) -> list[Path]:
    fit_path = fit_path or config.out_dir / FIT_CSV
    table = read_csv(fit_path)
    require_columns(table, _FIT_COLUMNS, fit_path)
    selection = select_fdr(
        numeric_column(table, "pip", fit_path),
        config.fdr.alpha,
        config.fdr.rule,
        table["covariate_id"].astype(str).tolist(),
    )
    return [
        write_csv(
            pd.DataFrame(selection.rows(), columns=list(_SELECTION_COLUMNS)),
            config.out_dir / SELECTION_CSV,
        ),
        write_json(selection.to_dict(), config.out_dir / SELECTION_JSON),
    ]


def _package_versions() -> dict[str, str]:
    versions = {"fibag": __version__, "python": platform.python_version()}
    for name in _VERSIONED_PACKAGES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def run_pipeline(config: PipelineConfig) -> list[Path]:
    if config.cbvs.algorithm in STOCHASTIC_ALGORITHMS:
        config.require_seed("pipeline")
    stages = (
        ("mechanistic", stage_mechanistic),
        ("calibrate", stage_calibrate),
        ("cbvs", stage_cbvs),
        ("fdr", stage_fdr),
    )
    written: list[Path] = []
    manifest_stages = []
    timings = {}
    for name, stage in stages:
        logger.info("Stage %s started", name)
        start = time.perf_counter()
        try:
            outputs = stage(config)
        except FibagError as exc:
            logger.error("Stage %s failed: %s", name, exc)
            raise
        timings[name] = time.perf_counter() - start
        logger.info("Stage %s finished in %.2fs", name, timings[name])
        manifest_stages.append({"name": name, "outputs": [p.name for p in outputs]})
        written += outputs

    manifest = {
        "config_sha256": config.fingerprint(),
        "seed": config.seed,
        "algorithm": config.cbvs.algorithm,
        "versions": _package_versions(),
        "stages": manifest_stages,
    }
    written.append(write_json(manifest, config.out_dir / MANIFEST_JSON))
    written.append(write_json({"wall_seconds": timings}, config.out_dir / TIMINGS_JSON))
    return written


def run_simulate(args: argparse.Namespace) -> list[Path]:
    scenario = load_scenario(
        args.scenario,
        seed=args.seed,
        replicates=args.replicates,
        full_grid=True if args.full_grid else None,
        algorithm=args.algo,
    )
    report = run_scenario(scenario, jobs=args.jobs or Settings().jobs)
    out = args.out or Settings().out_dir
    return [
        write_csv(report.table, out / METRICS_CSV),
        write_csv(report.summary, out / METRICS_SUMMARY_CSV),
        write_csv(report.long_table(), out / METRICS_LONG_CSV),
        write_json(
            {"scenario": scenario.model_dump(mode="json"), **report.to_dict()},
            out / METRICS_JSON,
        ),
    ]


# --- argument handling --------------------------------------------------------


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cbvs = {"algorithm": getattr(args, "algo", None)}
    fdr = {"alpha": getattr(args, "alpha", None), "rule": getattr(args, "fdr_rule", None)}
    return load_pipeline_config(
        args.config,
        seed=args.seed,
        jobs=args.jobs,
        out_dir=args.out,
        cbvs={k: v for k, v in cbvs.items() if v is not None} or None,
        fdr={k: v for k, v in fdr.items() if v is not None} or None,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--jobs", type=int, default=None, help="parallel worker processes")
    common.add_argument("--log-level", default=None, help="debug, info, warning or error")

    configured = argparse.ArgumentParser(add_help=False, parents=[common])
    configured.add_argument("--config", type=Path, default=None, help="TOML or JSON config file")

    algo = argparse.ArgumentParser(add_help=False)
    algo.add_argument("--algo", choices=[a.value for a in Algorithm], default=None)

    fdr = argparse.ArgumentParser(add_help=False)
    fdr.add_argument("--alpha", type=float, default=None, help="FDR level in (0, 1]")
    rules = [r.value for r in FdrRule] + list(RULE_ALIASES)
    fdr.add_argument("--fdr-rule", choices=rules, default=None)

    parser = _ArgumentParser(prog="fibag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    sub.add_parser("mechanistic", parents=[configured], help="score every biomarker axis")
    cal = sub.add_parser("calibrate", parents=[configured], help="turn evidence into priors")
    cal.add_argument("--evidence", type=Path, default=None, help=f"default: <out>/{MECHANISTIC_CSV}")
    cb = sub.add_parser("cbvs", parents=[configured, algo], help="fit the outcome model")
    cb.add_argument("--priors", type=Path, default=None, help=f"default: <out>/{PRIORS_CSV}")
    fd = sub.add_parser("fdr", parents=[configured, fdr], help="select covariates from PIPs")
    fd.add_argument("--fit", type=Path, default=None, help=f"default: <out>/{FIT_CSV}")
    sim = sub.add_parser("simulate", parents=[common, algo], help="run a simulation scenario")
    sim.add_argument("--scenario", type=Path, required=True, help="TOML or JSON scenario file")
    sim.add_argument("--replicates", type=int, default=None)
    sim.add_argument("--full-grid", action="store_true", help="all sample sizes, 100 replicates")
    sub.add_parser("pipeline", parents=[configured, algo, fdr], help="run all four stages")
    return parser


def _dispatch(args: argparse.Namespace) -> list[Path]:
    match args.command:
        case "simulate":
            return run_simulate(args)
        case "mechanistic":
            return stage_mechanistic(_config_from_args(args))
        case "calibrate":
            return stage_calibrate(_config_from_args(args), args.evidence)
        case "cbvs":
            return stage_cbvs(_config_from_args(args), args.priors)
        case "fdr":
            return stage_fdr(_config_from_args(args), args.fit)
        case "pipeline":
            return run_pipeline(_config_from_args(args))
    raise UsageError(f"unknown command {args.command!r}")


def _describe(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}"
        for err in exc.errors()
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = Settings()
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.jobs is None and settings.jobs != 1:
        args.jobs = settings.jobs

    try:
        written = _dispatch(args)
    except ValidationError as exc:
        logger.error("invalid configuration: %s", _describe(exc))
        return EXIT_DATA_FORMAT
    except FibagError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO

    for path in written:
        logger.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
