"""Synthetic datasets for the benchmark, the nonlinearity study and xi calibration."""

import logging
from collections.abc import Mapping

import numpy as np

from fibag.data.models import BiomarkerMap, ContinuousOutcome, GeneEntry, OmicsDataset
from fibag.errors import NumericalError, UsageError
from fibag.mechanistic.gp import EVIDENCE_THRESHOLDS, log_bayes_factor
from fibag.mechanistic.models import EvidenceClass, GpHyperParams, QuadratureConfig
from fibag.simulation.models import (
    DEFAULT_XI_TARGETS,
    NonlinearSample,
    Sim1Layout,
    Sim1Truth,
)
from fibag.utils.seeds import make_rng

logger = logging.getLogger(__name__)

UPSTREAM_PLATFORM = "sim"
XI_BRACKET = (0.0, 5.0)
NONLINEAR_BETA = np.array([10.0, -15.0, 10.0, -8.0, 20.0])


class BisectionFailed(NumericalError):
    """Raised when no xi in the search bracket reaches the requested median lBF."""


class LevelOutOfRange(UsageError):
    """Raised when a nonlinearity level is outside 0..5."""


def _bin_of(level: EvidenceClass) -> tuple[float, float]:
    lower = {evidence: threshold for threshold, evidence in EVIDENCE_THRESHOLDS}
    edges = sorted(lower.values())
    lo = lower.get(level, -np.inf)
    above = [edge for edge in edges if edge > lo]
    return lo, above[0] if above else np.inf


def covariate_ids(p: int) -> tuple[str, ...]:
    width = len(str(p))
    return tuple(f"x{j + 1:0{width}d}" for j in range(p))


def sim1_biomarker_map(p: int) -> BiomarkerMap:
    """Gene j is driven by upstream column j alone."""
    return BiomarkerMap(
        genes=tuple(GeneEntry(gid, j, (j,)) for j, gid in enumerate(covariate_ids(p)))
    )


def generate_sim1(
    n: int,
    layout: Sim1Layout,
    xi: Mapping[EvidenceClass, float],
    seed: int,
) -> tuple[OmicsDataset, Sim1Truth]:
    """Draw U ~ N(0, 1), X ~ N(xi U, 1) and Y ~ N(X beta, 1).

    The returned dataset is raw (uncentered); genes hold X and the upstream
    block holds U.
    """
    if n < 2:
        raise UsageError(f"need at least 2 samples, got {n}")
    evidence, bands = layout.labels()
    rng = np.random.default_rng(seed)
    p = layout.p

    xi_j = np.array([xi.get(level, 0.0) for level in evidence])
    u = rng.standard_normal((n, p))
    x = xi_j * u + rng.standard_normal((n, p))
    beta = np.array([rng.uniform(*band.bounds) for band in bands])
    y = x @ beta + rng.standard_normal(n)

    ids = covariate_ids(p)
    ds = OmicsDataset(
        sample_ids=tuple(f"s{i + 1}" for i in range(n)),
        upstream=u,
        upstream_ids=tuple(f"u_{gid}" for gid in ids),
        upstream_platforms=(UPSTREAM_PLATFORM,) * p,
        genes=x,
        gene_ids=ids,
        proteins=np.empty((n, 0)),
        protein_ids=(),
        outcome=ContinuousOutcome(y),
    )
    return ds, Sim1Truth(evidence=evidence, bands=bands, xi=xi_j, beta=beta)


def _median_lbf(
    xi: float,
    n: int,
    replicates: int,
    seed: int,
    hyper: GpHyperParams,
    quad: QuadratureConfig | None,
) -> float:
    # the same (U, e) draws are reused for every xi tried, so the median moves smoothly in xi
    lbfs = []
    for r in range(replicates):
        rng = make_rng(seed, r)
        u = rng.standard_normal(n)
        x = xi * u + rng.standard_normal(n)
        lbfs.append(log_bayes_factor(x - x.mean(), u, hyper, quad))
    return float(np.median(lbfs))


def calibrate_xi(
    targets: Mapping[EvidenceClass, float] | None = None,
    n: int = 50,
    hyper: GpHyperParams | None = None,
    seed: int = 0,
    *,
    replicates: int = 50,
    max_steps: int = 40,
    tol: float = 0.05,
    quad: QuadratureConfig | None = None,
) -> dict[EvidenceClass, float]:
    """Bisect xi in [0, 5] until the Monte Carlo median lBF hits each class target.

    A class is accepted once its median is within ``tol`` of the target and
    inside the class bin. The no-evidence class is pinned at xi = 0.
    """
    targets = dict(targets or DEFAULT_XI_TARGETS)
    hyper = hyper or GpHyperParams()
    lo_xi, hi_xi = XI_BRACKET
    result = {EvidenceClass.NONE: 0.0}

    top = _median_lbf(hi_xi, n, replicates, seed, hyper, quad)
    for level in EvidenceClass:
        if level is EvidenceClass.NONE:
            continue
        target = targets[level]
        bin_lo, bin_hi = _bin_of(level)
        if not bin_lo <= target < bin_hi:
            raise UsageError(f"target {target} for {level.value} lies outside its evidence bin")
        if top < target:
            raise BisectionFailed(
                f"median lBF at xi={hi_xi} is {top:.3f}, below the {level.value} target {target}"
            )
        a, b = lo_xi, hi_xi
        for step in range(max_steps):
            mid = 0.5 * (a + b)
            median = _median_lbf(mid, n, replicates, seed, hyper, quad)
            logger.debug("xi bisection %s step %d: xi=%.5f median lBF=%.4f",
                         level.value, step, mid, median)
            if abs(median - target) < tol and bin_lo <= median < bin_hi:
                break
            if median < target:
                a = mid
            else:
                b = mid
        else:
            raise BisectionFailed(
                f"no xi for {level.value} after {max_steps} steps (last median {median:.3f})"
            )
        result[level] = mid
        logger.info("xi for %s: %.4f (median lBF %.3f, target %.2f)",
                    level.value, mid, median, target)
    return result


def _nonlinear_terms(x: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4, x5 = x.T
    return np.column_stack([
        10.0 * np.cos(x1),
        -15.0 * x2**2,
        10.0 * np.exp(-x3) * x2,
        -8.0 * np.sin(x3) * np.cos(x4),
        20.0 * x1 * x5,
    ])


def nonlinear_mean(x: np.ndarray, level: int) -> np.ndarray:
    """Terms 1..level are nonlinear, the rest stay linear with the same coefficients."""
    if not 0 <= level <= len(NONLINEAR_BETA):
        raise LevelOutOfRange(f"nonlinearity level must lie in 0..5, got {level}")
    terms = x * NONLINEAR_BETA
    terms[:, :level] = _nonlinear_terms(x)[:, :level]
    return terms.sum(axis=1)


def generate_nonlinear(
    level: int, n: int, seed: int, *, noise_sd: float = 1.0
) -> NonlinearSample:
    if not 0 <= level <= len(NONLINEAR_BETA):
        raise LevelOutOfRange(f"nonlinearity level must lie in 0..5, got {level}")
    if n < 10:
        raise UsageError(f"nonlinearity study needs n >= 10, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n, len(NONLINEAR_BETA)))
    y = nonlinear_mean(x, level) + noise_sd * rng.standard_normal(n)
    return NonlinearSample(x=x, y=y, level=level)
