"""EM search for the posterior mode of the calibrated spike-and-slab model.

The inclusion indicators (and, for survival outcomes, the censored log
times) are the missing data. Each iteration runs one E-step followed by
conditional maximizations of beta, sigma^2 and omega, so the observed-data
log posterior returned by :func:`log_posterior_objective` never decreases.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from fibag.calibration.models import CalibratedPrior
from fibag.cbvs.design import Design, assemble_design
from fibag.cbvs.models import Algorithm, CbvsConfig, CbvsFit
from fibag.cbvs.posterior import prior_means
from fibag.cbvs.truncnorm import log_survival, lower_truncated_moments
from fibag.data.models import OmicsDataset, Outcome, SurvivalOutcome
from fibag.errors import NumericalError
from fibag.utils.linalg import jittered_cholesky

logger = logging.getLogger(__name__)


class Divergence(NumericalError):
    """Raised when the EM objective becomes non-finite."""


@dataclass
class EmvsState:
    beta: np.ndarray
    sigma_sq: float
    omega: np.ndarray


def _penalized_solve(x: np.ndarray, penalty: np.ndarray, y: np.ndarray) -> np.ndarray:
    """argmin ||y - X b||^2 + b' diag(penalty) b."""
    n, p = x.shape
    if n <= p:
        inv_pen = 1.0 / penalty
        m = (x * inv_pen) @ x.T
        m[np.diag_indices_from(m)] += 1.0
        return inv_pen * (x.T @ jittered_cholesky(m).solve(y))
    m = x.T @ x
    m[np.diag_indices_from(m)] += penalty
    return jittered_cholesky(m, scale=float(penalty.max())).solve(x.T @ y)


def inclusion_responsibilities(
    beta_sel: np.ndarray, sigma_sq: float, omega: np.ndarray, cfg: CbvsConfig
) -> np.ndarray:
    """P(gamma_j = 1 | beta_j, sigma^2, omega_j)."""
    sigma = math.sqrt(sigma_sq)
    slab = np.log(omega) + stats.norm.logpdf(beta_sel, scale=sigma * math.sqrt(cfg.v1))
    spike = np.log1p(-omega) + stats.norm.logpdf(beta_sel, scale=sigma * math.sqrt(cfg.v0))
    return np.exp(slab - np.logaddexp(slab, spike))


def _log_likelihood(
    outcome: Outcome, y: np.ndarray, fitted: np.ndarray, sigma: float
) -> float:
    if isinstance(outcome, SurvivalOutcome):
        events = ~outcome.censored
        return float(
            stats.norm.logpdf(y[events], loc=fitted[events], scale=sigma).sum()
            + log_survival(fitted[~events], sigma, y[~events]).sum()
        )
    return float(stats.norm.logpdf(y, loc=fitted, scale=sigma).sum())


def log_posterior_objective(
    state: EmvsState,
    design: Design,
    outcome: Outcome,
    f: np.ndarray,
    cfg: CbvsConfig,
) -> float:
    """Observed-data log posterior with gamma summed out, up to a constant."""
    x, n_fixed = design.x, design.n_fixed
    sigma = math.sqrt(state.sigma_sq)
    y = np.asarray(outcome.response, dtype=float)
    beta_sel = state.beta[n_fixed:]
    mixture = np.logaddexp(
        np.log(state.omega) + stats.norm.logpdf(beta_sel, scale=sigma * math.sqrt(cfg.v1)),
        np.log1p(-state.omega) + stats.norm.logpdf(beta_sel, scale=sigma * math.sqrt(cfg.v0)),
    )
    return (
        _log_likelihood(outcome, y, x @ state.beta, sigma)
        + float(stats.norm.logpdf(state.beta[:n_fixed], scale=sigma * math.sqrt(cfg.v1)).sum())
        + float(mixture.sum())
        + float(
            stats.invgamma.logpdf(state.sigma_sq, cfg.nu / 2.0, scale=cfg.nu * cfg.lambda_sig / 2.0)
        )
        + float(stats.beta.logpdf(state.omega, f, 1.0 / f).sum())
    )


def _expected_response(
    outcome: Outcome, fitted: np.ndarray, sigma: float
) -> tuple[np.ndarray, float]:
    """E[y | data, current parameters] and the summed conditional variance."""
    y = np.array(outcome.response, dtype=float)
    if not isinstance(outcome, SurvivalOutcome) or not outcome.censored.any():
        return y, 0.0
    censored = outcome.censored
    mean, var = lower_truncated_moments(fitted[censored], sigma, y[censored])
    y[censored] = mean
    return y, float(var.sum())


def fit_emvs(ds: OmicsDataset, priors: Sequence[CalibratedPrior], cfg: CbvsConfig) -> CbvsFit:
    design = assemble_design(ds)
    x, n, p, n_fixed = design.x, design.n, design.p, design.n_fixed
    outcome = ds.outcome
    means = prior_means(priors, design)
    f = np.array([prior.f_value for prior in priors], dtype=float)
    lo, hi = cfg.emvs.omega_clamp, 1.0 - cfg.emvs.omega_clamp
    fixed_penalty = np.full(n_fixed, 1.0 / cfg.v1)
    nu_lambda = cfg.nu * cfg.lambda_sig

    y0 = np.asarray(outcome.response, dtype=float)
    beta = _penalized_solve(x, np.full(p, 1.0 / cfg.v1), y0)
    resid = y0 - x @ beta
    state = EmvsState(
        beta=beta,
        sigma_sq=float((resid @ resid + nu_lambda) / (n + cfg.nu)),
        omega=np.clip(means, lo, hi),
    )

    objective = log_posterior_objective(state, design, outcome, f, cfg)
    trace = [objective]
    iterations = 0
    for iterations in range(1, cfg.emvs.max_iter + 1):
        # E-step
        p_star = inclusion_responsibilities(state.beta[n_fixed:], state.sigma_sq, state.omega, cfg)
        d_star = np.concatenate([fixed_penalty, p_star / cfg.v1 + (1.0 - p_star) / cfg.v0])
        y_hat, latent_var = _expected_response(outcome, x @ state.beta, math.sqrt(state.sigma_sq))

        # M-step
        beta = _penalized_solve(x, d_star, y_hat)
        resid = y_hat - x @ beta
        rss = resid @ resid + latent_var
        sigma_sq = float((rss + beta @ (d_star * beta) + nu_lambda) / (n + p + cfg.nu + 2.0))
        omega = np.clip((p_star + f - 1.0) / (f + 1.0 / f - 1.0), lo, hi)

        step = float(np.max(np.abs(beta - state.beta)))
        state = EmvsState(beta=beta, sigma_sq=sigma_sq, omega=omega)
        objective = log_posterior_objective(state, design, outcome, f, cfg)
        if not math.isfinite(objective):
            raise Divergence(f"EM objective is not finite at iteration {iterations}")
        trace.append(objective)
        logger.debug("EM iteration %d: objective %.6f, max step %.3e", iterations, objective, step)
        if step < cfg.emvs.tol:
            break
    else:
        logger.warning("EM stopped at max_iter=%d without reaching tol=%.1e",
                       cfg.emvs.max_iter, cfg.emvs.tol)

    pip = inclusion_responsibilities(state.beta[n_fixed:], state.sigma_sq, state.omega, cfg)
    logger.info("EM finished after %d iterations, objective %.4f", iterations, objective)
    return CbvsFit(
        algorithm=Algorithm.EMVS,
        seed=cfg.seed,
        covariate_ids=design.column_ids[n_fixed:],
        design_ids=design.column_ids,
        pip=pip,
        beta_hat=state.beta,
        beta_raw=design.to_raw(state.beta),
        sigma_hat=math.sqrt(state.sigma_sq),
        log_post_trace=np.array(trace),
        em_iterations=iterations,
        objective=objective,
        omega_hat=state.omega,
    )
