"""Marginal likelihoods and log Bayes factors for the mechanistic models.

The null is an intercept model with a Zellner-type prior on the mean; the
alternatives are a squared-exponential GP and a linear g-prior model. The
noise variance tau^2 is integrated analytically everywhere; the GP
length-scale is integrated numerically over its exponential prior.
"""

import logging
import math

import numpy as np
from numpy.polynomial.laguerre import laggauss
from scipy.spatial.distance import pdist, squareform
from scipy.special import logsumexp

from fibag.errors import NonFiniteError, NumericalError
from fibag.mechanistic.models import (
    EvidenceClass,
    GpHyperParams,
    GpMarginal,
    LbfConstants,
    QuadratureConfig,
)
from fibag.utils.linalg import jittered_cholesky

logger = logging.getLogger(__name__)

LN10 = math.log(10.0)
_MIN_LENGTH_SCALE = 1e-100

EVIDENCE_THRESHOLDS = (
    (2.0, EvidenceClass.DECISIVE),
    (1.0, EvidenceClass.STRONG),
    (0.5, EvidenceClass.SUBSTANTIAL),
)


class NonFiniteDistance(NumericalError):
    """Raised when pairwise distances of the upstream design are not finite."""


class NonPositiveQuadForm(NumericalError):
    """Raised when the intercept model's quadratic form is not positive."""


class QuadratureNotConverged(NumericalError):
    """Raised when the length-scale integral misses its tolerance."""


class SingularDesign(NumericalError):
    """Raised when the centered linear design is rank deficient."""


def _as_design(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def squared_distances(x: np.ndarray) -> np.ndarray:
    d2 = squareform(pdist(_as_design(x), metric="sqeuclidean"))
    if not np.all(np.isfinite(d2)):
        raise NonFiniteDistance("upstream design produces non-finite distances")
    return d2


def build_kernel(x: np.ndarray, lam: float, g: float) -> np.ndarray:
    """tau^2-free squared-exponential kernel, ``g * exp(-||u - v||^2 / lam^2)``."""
    if lam <= 0 or g <= 0:
        raise ValueError("length-scale and g must be positive")
    return _kernel_from_distances(squared_distances(x), lam, g)


def _kernel_from_distances(d2: np.ndarray, lam: float, g: float) -> np.ndarray:
    # lam -> 0 limit is g * I for distinct points
    lam = max(lam, _MIN_LENGTH_SCALE)
    return g * np.exp(-d2 / (lam * lam))


def log_marginal_null(y: np.ndarray, hyper: GpHyperParams) -> float:
    """Natural-log marginal likelihood of the intercept-only model."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    consts = LbfConstants.build(n, hyper)
    quad = consts.a + float(y @ y) - float(y.sum()) ** 2 / consts.c_n
    if quad <= 0:
        raise NonPositiveQuadForm(f"intercept quadratic form {quad:.3e} is not positive")
    shrink = consts.g / (1.0 + consts.g)
    return (
        consts.log_normalizer
        - 0.5 * math.log1p(n * shrink)
        - consts.b_n * math.log(quad / 2.0)
    )


class _GpIntegrand:
    """log |K~ + I|^{-1/2} ((a + y'(K~ + I)^{-1} y) / 2)^{-b_n} as a function of lambda."""

    def __init__(self, y: np.ndarray, x: np.ndarray, consts: LbfConstants) -> None:
        self._y = y
        self._d2 = squared_distances(x)
        self._consts = consts
        self._eye = np.eye(y.shape[0])
        self.evaluations = 0

    def __call__(self, lam: float) -> tuple[float, float]:
        self.evaluations += 1
        c = self._consts
        m = _kernel_from_distances(self._d2, lam, c.g) + self._eye
        factor = jittered_cholesky(m, scale=c.g)
        quad = float(self._y @ factor.solve(self._y))
        log_value = -0.5 * factor.logdet() - c.b_n * math.log((c.a + quad) / 2.0)
        return log_value, quad


def _gauss_laguerre(
    integrand: _GpIntegrand, lambda0: float, nodes: int
) -> tuple[float, np.ndarray, np.ndarray]:
    """log of sum_k w_k h(x_k / lambda0); the exponential prior is the Laguerre weight."""
    x, w = laggauss(nodes)
    keep = w > 0
    x, w = x[keep], w[keep]
    evaluated = [integrand(xk / lambda0) for xk in x]
    log_h = np.array([e[0] for e in evaluated])
    quads = np.array([e[1] for e in evaluated])
    log_terms = np.log(w) + log_h
    return float(logsumexp(log_terms)), log_terms, quads


def _adaptive_bisection(
    integrand: _GpIntegrand,
    lambda0: float,
    upper: float,
    log_scale: float,
    rel_tol: float,
    max_evaluations: int,
) -> tuple[float, float]:
    """Bisect [0, upper] until Richardson-corrected trapezoid panels agree.

    Values are scaled by exp(-log_scale) so the integral is O(1). Returns the
    log integral and the estimated relative error.
    """
    cache: dict[float, float] = {}

    def f(lam: float) -> float:
        if lam not in cache:
            log_h, _ = integrand(lam)
            cache[lam] = math.exp(math.log(lambda0) - lambda0 * lam + log_h - log_scale)
        return cache[lam]

    initial_panels = 64
    edges = np.linspace(0.0, upper, initial_panels + 1)
    stack = [(float(lo), float(hi)) for lo, hi in zip(edges[:-1], edges[1:])][::-1]
    total = 0.0
    error = 0.0
    while stack:
        lo, hi = stack.pop()
        mid = 0.5 * (lo + hi)
        width = hi - lo
        coarse = 0.5 * width * (f(lo) + f(hi))
        fine = 0.25 * width * (f(lo) + 2.0 * f(mid) + f(hi))
        local = abs(fine - coarse) / 3.0
        if local <= rel_tol * width / upper or len(cache) >= max_evaluations:
            total += fine + (fine - coarse) / 3.0
            error += local
        else:
            stack.append((mid, hi))
            stack.append((lo, mid))

    if total <= 0 or not math.isfinite(total):
        raise QuadratureNotConverged("adaptive length-scale integral is not positive")
    rel_error = error / total
    if rel_error > rel_tol:
        raise QuadratureNotConverged(
            f"length-scale integral relative error {rel_error:.2e} after {len(cache)} evaluations"
        )
    return log_scale + math.log(total), rel_error


def integrate_gp_evidence(
    y: np.ndarray,
    x: np.ndarray,
    hyper: GpHyperParams,
    quad: QuadratureConfig | None = None,
) -> GpMarginal:
    """GP marginal likelihood with quadrature diagnostics and the noise-variance estimate."""
    quad = quad or QuadratureConfig()
    y = np.asarray(y, dtype=float)
    x = _as_design(x)
    if x.shape[1] < 1:
        raise ValueError("GP alternative needs at least one upstream column")
    consts = LbfConstants.build(y.shape[0], hyper)
    integrand = _GpIntegrand(y, x, consts)

    log_primary, log_terms, quads = _gauss_laguerre(integrand, hyper.lambda0, quad.nodes)
    log_check, _, _ = _gauss_laguerre(integrand, hyper.lambda0, quad.check_nodes)
    quad_error = abs(math.expm1(log_check - log_primary))
    log_integral = log_primary
    method = "gauss-laguerre"

    if quad_error > quad.rel_tol:
        logger.warning(
            "Gauss-Laguerre %d/%d nodes disagree by %.2e, falling back to adaptive bisection",
            quad.nodes, quad.check_nodes, quad_error,
        )
        log_integral, quad_error = _adaptive_bisection(
            integrand, hyper.lambda0, quad.fallback_span / hyper.lambda0,
            log_primary, quad.rel_tol, quad.max_evaluations,
        )
        method = "adaptive-bisection"

    # posterior mean of tau^2 given lambda is ((a + q) / 2) / (b_n - 1), averaged over lambda
    weights = np.exp(log_terms - logsumexp(log_terms))
    if consts.b_n > 1:
        tau_sq_hat = float(weights @ ((consts.a + quads) / (2.0 * (consts.b_n - 1.0))))
    else:
        tau_sq_hat = math.inf

    return GpMarginal(
        log_marginal=consts.log_normalizer + log_integral,
        quad_error=quad_error,
        nodes_used=integrand.evaluations,
        method=method,
        tau_sq_hat=tau_sq_hat,
    )


def log_marginal_gp(
    y: np.ndarray, x: np.ndarray, hyper: GpHyperParams, quad: QuadratureConfig | None = None
) -> float:
    return integrate_gp_evidence(y, x, hyper, quad).log_marginal


def log_bayes_factor(
    y: np.ndarray, x: np.ndarray, hyper: GpHyperParams, quad: QuadratureConfig | None = None
) -> float:
    """Base-10 log Bayes factor of the GP alternative against the intercept null."""
    return (log_marginal_gp(y, x, hyper, quad) - log_marginal_null(y, hyper)) / LN10


def log_marginal_linear(y: np.ndarray, x: np.ndarray, hyper: GpHyperParams) -> float:
    """Linear alternative y = X beta + e with beta ~ N(0, g tau^2 (X'X)^{-1}).

    Columns are centered like the response, so a constant column is collinear
    with the implicit intercept and rejected.
    """
    y = np.asarray(y, dtype=float)
    x = _as_design(x)
    x = x - x.mean(axis=0, keepdims=True)
    n, d = x.shape
    if np.linalg.matrix_rank(x) < d:
        raise SingularDesign(f"centered design of shape {x.shape} is rank deficient")

    consts = LbfConstants.build(n, hyper)
    g = consts.g
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    fitted = x @ coef
    quad = float(y @ y) - g / (1.0 + g) * float(fitted @ fitted)
    return (
        consts.log_normalizer
        - 0.5 * d * math.log1p(g)
        - consts.b_n * math.log((consts.a + quad) / 2.0)
    )


def log_bayes_factor_linear(y: np.ndarray, x: np.ndarray, hyper: GpHyperParams) -> float:
    return (log_marginal_linear(y, x, hyper) - log_marginal_null(y, hyper)) / LN10


def classify_evidence(lbf: float) -> EvidenceClass:
    """Evidence class with left-closed bins [0.5, 1), [1, 2), [2, inf)."""
    if not math.isfinite(lbf):
        raise NonFiniteError(f"lbf must be finite, got {lbf}")
    for threshold, evidence in EVIDENCE_THRESHOLDS:
        if lbf >= threshold:
            return evidence
    return EvidenceClass.NONE
