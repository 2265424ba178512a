"""Combined design matrix [1 | B | G | P] on a common unit-variance scale."""

import logging
from dataclasses import dataclass

import numpy as np

from fibag.data.models import OmicsDataset

logger = logging.getLogger(__name__)

INTERCEPT_ID = "(intercept)"


@dataclass(frozen=True)
class Design:
    x: np.ndarray
    column_ids: tuple[str, ...]
    scale: np.ndarray
    n_fixed: int

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def selectable(self) -> range:
        return range(self.n_fixed, self.p)

    @property
    def n_selectable(self) -> int:
        return self.p - self.n_fixed

    def to_raw(self, beta: np.ndarray) -> np.ndarray:
        """Coefficients on the input (unstandardized) column scale."""
        return np.asarray(beta) / self.scale


def _standardize(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centered = block - block.mean(axis=0, keepdims=True)
    sd = centered.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return centered / sd, sd


def assemble_design(ds: OmicsDataset) -> Design:
    """Intercept, then covariates B, genes G and proteins P.

    Non-intercept columns are centered and scaled to unit variance; a constant
    column stays zero with scale 1.
    """
    n = ds.n
    blocks = [ds.covariates] if ds.covariates is not None else []
    blocks += [ds.genes, ds.proteins]
    standardized, scales = zip(*(_standardize(b) for b in blocks))
    x = np.column_stack([np.ones(n), *standardized])
    scale = np.concatenate([[1.0], *scales])
    column_ids = (INTERCEPT_ID, *ds.covariate_ids, *ds.gene_ids, *ds.protein_ids)
    n_fixed = 1 + ds.n_covariates
    logger.debug("Design %dx%d with %d fixed columns", n, x.shape[1], n_fixed)
    return Design(x=x, column_ids=column_ids, scale=scale, n_fixed=n_fixed)
