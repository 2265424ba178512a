"""Selection quality of PIP rankings and FDR-selected sets against a known truth."""

import numpy as np
from sklearn.metrics import auc, matthews_corrcoef, roc_auc_score, roc_curve

from fibag.errors import UsageError
from fibag.simulation.models import SimMetrics

PARTIAL_MAX_FPR = 0.2


class DegenerateTruth(UsageError):
    """Raised when the truth vector lacks positives or negatives."""


def partial_auc(truth: np.ndarray, scores: np.ndarray, max_fpr: float = PARTIAL_MAX_FPR) -> float:
    """Area under the ROC curve over FPR in [0, max_fpr], divided by max_fpr.

    No McClish standardization: a random ranking scores about max_fpr / 2.
    """
    fpr, tpr, _ = roc_curve(truth, scores, drop_intermediate=False)
    stop = np.searchsorted(fpr, max_fpr, "right")
    x_interp = [fpr[stop - 1], fpr[stop]]
    y_interp = [tpr[stop - 1], tpr[stop]]
    tpr = np.append(tpr[:stop], np.interp(max_fpr, x_interp, y_interp))
    fpr = np.append(fpr[:stop], max_fpr)
    return float(auc(fpr, tpr) / max_fpr)


def compute_metrics(truth, pips, selected) -> SimMetrics:
    truth = np.asarray(truth, dtype=bool)
    pips = np.asarray(pips, dtype=float)
    selected = np.asarray(selected, dtype=bool)
    if not truth.shape == pips.shape == selected.shape:
        raise UsageError(
            f"truth, pips and selection differ in length: "
            f"{truth.size}, {pips.size}, {selected.size}"
        )
    positives = int(truth.sum())
    negatives = truth.size - positives
    if positives == 0 or negatives == 0:
        raise DegenerateTruth("truth needs at least one positive and one negative")

    tp = int(np.sum(truth & selected))
    fp = int(np.sum(~truth & selected))
    return SimMetrics(
        auc=float(roc_auc_score(truth, pips)),
        auc20=partial_auc(truth, pips),
        tpr=tp / positives,
        fpr=fp / negatives,
        mcc=float(matthews_corrcoef(truth, selected)),
    )
