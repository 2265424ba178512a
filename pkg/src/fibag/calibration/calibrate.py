"""Evidence calibration: lBF -> Beta(F(s), 1/F(s)) hyperprior on inclusion."""

import logging
import math
from collections.abc import Iterable, Sequence

import numpy as np

from fibag.calibration.models import (
    AggregationKind,
    AggregationScheme,
    CalibratedPrior,
    CalibrationConfig,
)
from fibag.errors import NonFiniteError, UsageError
from fibag.mechanistic.models import Axis, MechanisticResult

logger = logging.getLogger(__name__)


class EmptyEvidence(UsageError):
    """Raised when aggregation receives no evidence values."""


class WeightMismatch(UsageError):
    """Raised when precision weights are missing or do not line up with the evidence."""


class UnknownCovariate(UsageError):
    """Raised when evidence names a covariate outside the requested order."""


def calibration_function(s: float, config: CalibrationConfig | None = None) -> float:
    """F(s) = scale * G(s)^power with G the logistic step from 1/2 to 1."""
    config = config or CalibrationConfig()
    s_star = max(s, config.floor)
    ratio = (s_star / config.midpoint) ** (-config.exponent)
    g = 0.5 * (1.0 / (1.0 + ratio) + 1.0)
    return config.scale * g**config.power


def calibrate(
    lbf: float, config: CalibrationConfig | None = None, covariate_id: str = ""
) -> CalibratedPrior:
    if not math.isfinite(lbf):
        raise NonFiniteError(f"evidence for {covariate_id or 'covariate'} is not finite: {lbf}")
    f = calibration_function(lbf, config)
    a, b = f, 1.0 / f
    total = a + b
    return CalibratedPrior(
        covariate_id=covariate_id,
        s=lbf,
        f_value=f,
        beta_a=a,
        beta_b=b,
        prior_mean=a / total,
        prior_variance=1.0 / (total * total * (total + 1.0)),
    )


def aggregate(
    evidence: Sequence[float],
    scheme: AggregationScheme | None = None,
    weights: Sequence[float] | None = None,
) -> float:
    """Collapse several lBFs into one scalar.

    ``weights`` overrides ``scheme.weights`` for precision weighting.
    """
    scheme = scheme or AggregationScheme()
    values = np.asarray(evidence, dtype=float)
    if values.size == 0:
        raise EmptyEvidence("no evidence to aggregate")
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("evidence values must be finite")

    match scheme.kind:
        case AggregationKind.AVERAGE:
            return float(values.mean())
        case AggregationKind.MAXIMAL:
            return float(values.max())
        case AggregationKind.PRECISION_WEIGHTED:
            rho = weights if weights is not None else scheme.weights
            if rho is None:
                raise WeightMismatch("precision-weighted aggregation needs weights")
            rho = np.asarray(rho, dtype=float)
            if rho.shape != values.shape:
                raise WeightMismatch(f"{rho.size} weights for {values.size} evidence values")
            if not np.all(rho > 0) or not np.all(np.isfinite(rho)):
                raise WeightMismatch("precision weights must be finite and positive")
            return float(rho @ values / rho.sum())


def _weights_for(scheme: AggregationScheme, results: list[MechanisticResult]) -> list[float]:
    # explicit weights are per axis, in Axis declaration order
    if scheme.weights is not None:
        if len(scheme.weights) != len(Axis):
            raise WeightMismatch(
                f"expected one weight per axis ({len(Axis)}), got {len(scheme.weights)}"
            )
        per_axis = dict(zip(Axis, scheme.weights))
        return [per_axis[r.axis] for r in results]
    return [1.0 / r.tau_sq_hat for r in results]


def calibrate_all(
    results: Iterable[MechanisticResult],
    scheme: AggregationScheme | None,
    covariate_order: Sequence[str],
    config: CalibrationConfig | None = None,
) -> list[CalibratedPrior]:
    """One prior per covariate in ``covariate_order``; covariates without evidence get Beta(1, 1)."""
    scheme = scheme or AggregationScheme()
    known = set(covariate_order)
    grouped: dict[str, list[MechanisticResult]] = {}
    for result in results:
        if result.biomarker_id not in known:
            raise UnknownCovariate(f"evidence for {result.biomarker_id!r} has no matching covariate")
        grouped.setdefault(result.biomarker_id, []).append(result)

    priors = []
    for covariate_id in covariate_order:
        entries = grouped.get(covariate_id, [])
        if not entries:
            s = 0.0
        else:
            weights = (
                _weights_for(scheme, entries)
                if scheme.kind is AggregationKind.PRECISION_WEIGHTED
                else None
            )
            s = aggregate([r.lbf for r in entries], scheme, weights)
        priors.append(calibrate(s, config, covariate_id))

    logger.info(
        "Calibrated %d covariates (%d with evidence, %s aggregation)",
        len(priors), sum(1 for c in covariate_order if c in grouped), scheme.kind.value,
    )
    return priors


def uniform_priors(covariate_order: Sequence[str]) -> list[CalibratedPrior]:
    """Priors with every lBF forced to zero, i.e. Beta(1, 1) everywhere."""
    return [calibrate(0.0, covariate_id=c) for c in covariate_order]
