"""Cholesky factorization with escalating diagonal jitter."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from fibag.errors import NumericalError

logger = logging.getLogger(__name__)

JITTER_START = 1e-8
JITTER_MAX = 1e-4
JITTER_GROWTH = 10.0


class FactorizationFailure(NumericalError):
    """Raised when a matrix stays non positive definite after max jitter."""


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray
    jitter: float

    def solve(self, b: np.ndarray) -> np.ndarray:
        return linalg.cho_solve((self.lower, True), b, check_finite=False)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def jittered_cholesky(
    a: np.ndarray,
    scale: float = 1.0,
    *,
    start: float = JITTER_START,
    max_jitter: float = JITTER_MAX,
) -> CholeskyFactor:
    """Factor a symmetric matrix, adding diagonal jitter only if needed.

    Jitter runs start*scale, 10*start*scale, ... up to max_jitter*scale.
    """
    a = np.ascontiguousarray(a, dtype=float)
    try:
        return CholeskyFactor(linalg.cholesky(a, lower=True, check_finite=False), 0.0)
    except linalg.LinAlgError:
        pass

    eye = np.eye(a.shape[0])
    jitter = start * scale
    while jitter <= max_jitter * scale * (1 + 1e-12):
        try:
            lower = linalg.cholesky(a + jitter * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            jitter *= JITTER_GROWTH
            continue
        logger.warning("Added diagonal jitter %.3e to a %dx%d factorization", jitter, *a.shape)
        return CholeskyFactor(lower, jitter)

    raise FactorizationFailure(
        f"matrix of shape {a.shape} not positive definite with jitter up to {max_jitter * scale:.3e}"
    )
