import numpy as np
import pytest

from fibag.cbvs.emvs import fit_emvs, inclusion_responsibilities
from fibag.cbvs.models import Algorithm, CbvsConfig, EmvsConfig
from fibag.data.models import ContinuousOutcome
from tests.conftest import make_dataset, make_priors


# relative float noise of re-evaluating the objective at an unchanged optimum
_ROUNDING = 1e-10


def _assert_non_decreasing_up_to_rounding(trace: np.ndarray) -> None:
    steps = np.diff(trace)
    assert np.all(steps >= -_ROUNDING * np.abs(trace).max())


@pytest.mark.parametrize("seed", range(50))
def test_objective_never_decreases_up_to_rounding(seed):
    rng = np.random.default_rng(seed)
    ds = make_dataset(n=40, q_genes=6, q_proteins=2, seed=seed, effects=(1.0, -0.5))
    priors = make_priors(ds, rng.uniform(-1.0, 3.0, 8))
    fit = fit_emvs(ds, priors, CbvsConfig(algorithm=Algorithm.EMVS))
    assert fit.log_post_trace.size == fit.em_iterations + 1
    _assert_non_decreasing_up_to_rounding(fit.log_post_trace)


def test_censored_objective_never_decreases_up_to_rounding():
    ds = make_dataset(n=50, q_genes=5, seed=21, survival=True, censor_fraction=0.35)
    fit = fit_emvs(ds, make_priors(ds), CbvsConfig(algorithm=Algorithm.EMVS))
    _assert_non_decreasing_up_to_rounding(fit.log_post_trace)
    assert np.all((fit.pip >= 0) & (fit.pip <= 1))


def test_more_covariates_than_samples():
    ds = make_dataset(n=15, q_genes=25, seed=22, effects=(3.0,))
    fit = fit_emvs(ds, make_priors(ds), CbvsConfig(algorithm=Algorithm.EMVS))
    _assert_non_decreasing_up_to_rounding(fit.log_post_trace)
    assert fit.pip[0] > 0.5


def test_true_effect_has_highest_pip():
    ds = make_dataset(n=100, q_genes=4, seed=23, effects=(2.0,))
    fit = fit_emvs(ds, make_priors(ds), CbvsConfig(algorithm=Algorithm.EMVS))
    assert fit.pip[0] > 0.9
    assert fit.pip[0] > fit.pip[1:].max()


def test_survival_without_censoring_matches_continuous():
    survival = make_dataset(n=40, q_genes=3, seed=24, survival=True)
    continuous = survival.with_outcome(ContinuousOutcome(survival.outcome.z))
    cfg = CbvsConfig(algorithm=Algorithm.EMVS)
    a = fit_emvs(survival, make_priors(survival), cfg)
    b = fit_emvs(continuous, make_priors(survival), cfg)
    np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
    np.testing.assert_array_equal(a.pip, b.pip)


def test_max_iter_stops_early():
    ds = make_dataset(n=40, q_genes=4, seed=25)
    cfg = CbvsConfig(algorithm=Algorithm.EMVS, emvs=EmvsConfig(max_iter=2, tol=1e-300))
    fit = fit_emvs(ds, make_priors(ds), cfg)
    assert fit.em_iterations == 2


def test_omega_stays_inside_clamp():
    ds = make_dataset(n=40, q_genes=4, seed=26)
    cfg = CbvsConfig(algorithm=Algorithm.EMVS)
    fit = fit_emvs(ds, make_priors(ds, [-1.0, 0.0, 5.0, 12.0]), cfg)
    lo = cfg.emvs.omega_clamp
    assert np.all((fit.omega_hat >= lo) & (fit.omega_hat <= 1.0 - lo))


def test_responsibilities_equal_weights_at_zero():
    cfg = CbvsConfig(v0=0.25, v1=1.0)
    p = inclusion_responsibilities(np.zeros(1), 1.0, np.array([0.5]), cfg)
    # spike density at zero is twice the slab density
    assert p[0] == pytest.approx(1.0 / 3.0)
