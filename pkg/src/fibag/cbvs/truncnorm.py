"""Normal distributions truncated below, for censored log survival times."""

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

# beyond this standardized bound ndtr(-a) underflows and the tail sampler takes over
TAIL_SWITCH = 37.0


def _tail_draw(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact draws of Z | Z > a for large a (Marsaglia's tail method)."""
    out = np.empty_like(a)
    pending = np.arange(a.size)
    while pending.size:
        bound = a[pending]
        u1 = 1.0 - rng.random(pending.size)
        u2 = rng.random(pending.size)
        x = np.sqrt(bound * bound - 2.0 * np.log(u1))
        accept = u2 * x < bound
        out[pending[accept]] = x[accept]
        pending = pending[~accept]
    return out


def sample_lower_truncated(
    mean: np.ndarray, sd: float, lower: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw Y ~ N(mean, sd^2) conditioned on Y > lower, elementwise.

    Inverse CDF on the upper tail, Z = -ndtri(u * ndtr(-a)), so the draw stays
    accurate when the bound sits far into the right tail.
    """
    mean = np.asarray(mean, dtype=float)
    a = (np.asarray(lower, dtype=float) - mean) / sd
    u = 1.0 - rng.random(a.shape)
    z = np.empty_like(a)
    body = a <= TAIL_SWITCH
    z[body] = -ndtri(u[body] * ndtr(-a[body]))
    if not body.all():
        z[~body] = _tail_draw(a[~body], rng)
    return mean + sd * np.maximum(z, a)


def inverse_mills(a: np.ndarray) -> np.ndarray:
    """phi(a) / (1 - Phi(a)), evaluated in log space."""
    a = np.asarray(a, dtype=float)
    log_phi = -0.5 * a * a - 0.5 * np.log(2.0 * np.pi)
    return np.exp(log_phi - log_ndtr(-a))


def lower_truncated_moments(
    mean: np.ndarray, sd: float, lower: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of N(mean, sd^2) truncated below at ``lower``."""
    mean = np.asarray(mean, dtype=float)
    a = (np.asarray(lower, dtype=float) - mean) / sd
    lam = inverse_mills(a)
    expectation = mean + sd * lam
    variance = sd * sd * np.clip(1.0 + a * lam - lam * lam, 0.0, None)
    return expectation, variance


def log_survival(mean: np.ndarray, sd: float, lower: np.ndarray) -> np.ndarray:
    """log P(Y > lower) for Y ~ N(mean, sd^2)."""
    return log_ndtr((np.asarray(mean, dtype=float) - np.asarray(lower, dtype=float)) / sd)
