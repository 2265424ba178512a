"""Collapsed posterior of the inclusion indicators and Gaussian coefficient draws.

With beta ~ N(0, sigma^2 A_gamma), sigma^2 ~ IG(nu/2, nu*lambda/2) and each
omega_j integrated against its Beta prior,

    log P(gamma | y) = -1/2 log|I + X A X'| - (n + nu)/2 log(nu*lambda + y'(I + X A X')^{-1} y)
                       + sum_j [gamma_j log p_j + (1 - gamma_j) log(1 - p_j)] + const.

The n x n form is used when n <= p, otherwise the p x p form through
|I + X A X'| = |A| |A^{-1} + X'X|.
"""

import logging
import math
from collections import OrderedDict
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from fibag.calibration.models import CalibratedPrior
from fibag.cbvs.design import Design, assemble_design
from fibag.cbvs.models import CbvsConfig
from fibag.data.models import ContinuousOutcome, OmicsDataset
from fibag.errors import UsageError
from fibag.utils.linalg import CholeskyFactor, jittered_cholesky

logger = logging.getLogger(__name__)

# current state and latest proposal
CACHE_SIZE = 2


class PriorMismatch(UsageError):
    """Raised when the number of priors differs from the selectable covariates."""


def prior_means(priors: Sequence[CalibratedPrior], design: Design) -> np.ndarray:
    if len(priors) != design.n_selectable:
        raise PriorMismatch(
            f"{len(priors)} priors for {design.n_selectable} selectable covariates"
        )
    expected = design.column_ids[design.n_fixed:]
    for prior, cid in zip(priors, expected):
        if prior.covariate_id and prior.covariate_id != cid:
            raise PriorMismatch(f"prior for {prior.covariate_id!r} where {cid!r} was expected")
    return np.array([p.prior_mean for p in priors], dtype=float)


def slab_variances(gamma: np.ndarray, n_fixed: int, cfg: CbvsConfig) -> np.ndarray:
    return np.concatenate([np.full(n_fixed, cfg.v1), np.where(gamma == 1, cfg.v1, cfg.v0)])


@dataclass(frozen=True)
class _Factorization:
    factor: CholeskyFactor
    a: np.ndarray
    dual: bool


class CollapsedPosterior:
    """Evaluates log P(gamma | y) for one design, caching recent factorizations."""

    def __init__(self, design: Design, means: np.ndarray, cfg: CbvsConfig) -> None:
        self.design = design
        self._x = design.x
        self._cfg = cfg
        self._log_p = np.log(means)
        self._log_q = np.log1p(-means)
        self._dual = design.n <= design.p
        self._xtx = None if self._dual else self._x.T @ self._x
        self._cache: OrderedDict[bytes, _Factorization] = OrderedDict()

    def log_prior(self, gamma: np.ndarray) -> float:
        return float(np.where(gamma == 1, self._log_p, self._log_q).sum())

    def factorize(self, gamma: np.ndarray) -> _Factorization:
        key = np.asarray(gamma, dtype=np.int8).tobytes()
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        a = slab_variances(gamma, self.design.n_fixed, self._cfg)
        if self._dual:
            m = (self._x * a) @ self._x.T
            m[np.diag_indices_from(m)] += 1.0
            factor = jittered_cholesky(m)
        else:
            m = self._xtx.copy()
            m[np.diag_indices_from(m)] += 1.0 / a
            factor = jittered_cholesky(m, scale=float(np.max(1.0 / a)))
        fact = _Factorization(factor, a, self._dual)
        self._cache[key] = fact
        if len(self._cache) > CACHE_SIZE:
            self._cache.popitem(last=False)
        return fact

    def _logdet_and_quad(self, fact: _Factorization, y: np.ndarray) -> tuple[float, float]:
        if fact.dual:
            return fact.factor.logdet(), float(y @ fact.factor.solve(y))
        b = self._x.T @ y
        logdet = float(np.log(fact.a).sum()) + fact.factor.logdet()
        return logdet, float(y @ y - b @ fact.factor.solve(b))

    def residual_scale(self, gamma: np.ndarray, y: np.ndarray) -> float:
        """nu*lambda + y'(I + X A X')^{-1} y."""
        _, quad = self._logdet_and_quad(self.factorize(gamma), y)
        return self._cfg.nu * self._cfg.lambda_sig + max(quad, 0.0)

    def evaluate(self, gamma: np.ndarray, y: np.ndarray) -> float:
        logdet, quad = self._logdet_and_quad(self.factorize(gamma), y)
        shape = 0.5 * (self.design.n + self._cfg.nu)
        scale = self._cfg.nu * self._cfg.lambda_sig + max(quad, 0.0)
        return -0.5 * logdet - shape * math.log(scale) + self.log_prior(gamma)

    def draw_coefficients(
        self, gamma: np.ndarray, y: np.ndarray, rng: np.random.Generator
    ) -> tuple[np.ndarray, float]:
        """One draw of (beta, sigma^2) from their joint posterior given gamma."""
        fact = self.factorize(gamma)
        shape = 0.5 * (self.design.n + self._cfg.nu)
        sigma_sq = 0.5 * self.residual_scale(gamma, y) / rng.gamma(shape)
        beta = _gaussian_draw(self._x, fact, y, math.sqrt(sigma_sq), rng)
        return beta, sigma_sq


def _gaussian_draw(
    x: np.ndarray, fact: _Factorization, y: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """beta ~ N((A^{-1} + X'X)^{-1} X'y, sigma^2 (A^{-1} + X'X)^{-1})."""
    p = x.shape[1]
    if fact.dual:
        # O(n^2 p) sampler through the n x n system
        u = np.sqrt(fact.a) * rng.standard_normal(p)
        v = x @ u + rng.standard_normal(x.shape[0])
        w = fact.factor.solve(y / sigma - v)
        return sigma * (u + fact.a * (x.T @ w))
    mean = fact.factor.solve(x.T @ y)
    z = rng.standard_normal(p)
    return mean + sigma * linalg.solve_triangular(fact.factor.lower.T, z, lower=False)


def draw_conditional_beta(
    x: np.ndarray,
    a: np.ndarray,
    y: np.ndarray,
    sigma_sq: float,
    rng: np.random.Generator,
    xtx: np.ndarray | None = None,
) -> np.ndarray:
    """beta | sigma^2, A, y for the Gibbs sampler; ``xtx`` selects the p x p path."""
    if xtx is None:
        m = (x * a) @ x.T
        m[np.diag_indices_from(m)] += 1.0
        fact = _Factorization(jittered_cholesky(m), a, True)
    else:
        m = xtx.copy()
        m[np.diag_indices_from(m)] += 1.0 / a
        fact = _Factorization(jittered_cholesky(m, scale=float(np.max(1.0 / a))), a, False)
    return _gaussian_draw(x, fact, y, math.sqrt(sigma_sq), rng)


def log_collapsed_posterior(
    gamma: np.ndarray,
    ds: OmicsDataset,
    priors: Sequence[CalibratedPrior],
    cfg: CbvsConfig,
    y: np.ndarray | None = None,
) -> float:
    """log P(gamma | y) up to a constant; ``y`` overrides the dataset response."""
    if y is None:
        if not isinstance(ds.outcome, ContinuousOutcome):
            raise UsageError("collapsed posterior needs a continuous or completed response")
        y = ds.outcome.y
    design = assemble_design(ds)
    gamma = np.asarray(gamma)
    if gamma.shape != (design.n_selectable,):
        raise PriorMismatch(f"gamma has shape {gamma.shape}, expected ({design.n_selectable},)")
    posterior = CollapsedPosterior(design, prior_means(priors, design), cfg)
    return posterior.evaluate(gamma, np.asarray(y, dtype=float))
