import math

import numpy as np
import pytest
from scipy import stats

from fibag.cbvs.design import assemble_design
from fibag.cbvs.engine import fit_cbvs
from fibag.cbvs.gibbs import draw_inclusion_weights, fit_gibbs
from fibag.cbvs.models import Algorithm, BmaWeighting, CbvsConfig
from fibag.cbvs.selection_mcmc import (
    AllMovesImpossible,
    Move,
    ZeroIterations,
    choose_move,
    fit_selection_mcmc,
    log_proposal_ratio,
)
from fibag.cbvs.truncnorm import lower_truncated_moments, sample_lower_truncated
from fibag.data.models import ContinuousOutcome
from tests.conftest import enumerate_posterior, make_dataset, make_priors


def _cfg(**overrides) -> CbvsConfig:
    values = {"iterations": 1500, "burn_in": 300, "seed": 11}
    values.update(overrides)
    return CbvsConfig(**values)


class TestMoves:
    def test_full_model_only_deletes(self):
        rng = np.random.default_rng(0)
        assert {choose_move(4, 4, rng) for _ in range(50)} == {Move.DELETE}

    def test_empty_model_only_adds(self):
        rng = np.random.default_rng(0)
        assert {choose_move(0, 4, rng) for _ in range(50)} == {Move.ADD}

    def test_interior_uses_every_move(self):
        rng = np.random.default_rng(0)
        assert {choose_move(2, 4, rng) for _ in range(200)} == set(Move)

    def test_proposal_ratio_interior(self):
        # choose 1 of q-k to add, reverse picks 1 of k+1 to delete
        assert log_proposal_ratio(Move.ADD, 1, 5) == pytest.approx(math.log(2.0))
        assert log_proposal_ratio(Move.ADD, 2, 5) == pytest.approx(0.0)
        assert log_proposal_ratio(Move.DELETE, 2, 5) == pytest.approx(math.log(0.5))
        assert log_proposal_ratio(Move.SWAP, 2, 5) == 0.0

    def test_proposal_ratio_at_boundaries(self):
        assert log_proposal_ratio(Move.ADD, 0, 5) == pytest.approx(math.log(5.0 / 3.0))
        assert log_proposal_ratio(Move.DELETE, 5, 5) == pytest.approx(math.log(5.0 / 3.0))
        assert log_proposal_ratio(Move.DELETE, 1, 5) == pytest.approx(math.log(3.0 / 5.0))
        assert log_proposal_ratio(Move.ADD, 0, 1) == pytest.approx(0.0)


class TestTruncatedNormal:
    def test_draws_respect_bound(self):
        rng = np.random.default_rng(1)
        lower = np.array([-1.0, 0.0, 2.5, 8.0, 60.0])
        for _ in range(200):
            draws = sample_lower_truncated(np.zeros(5), 1.0, lower, rng)
            assert np.all(draws >= lower)

    @pytest.mark.parametrize("bound", [-1.0, 0.5, 3.0])
    def test_sample_moments(self, bound):
        rng = np.random.default_rng(2)
        draws = sample_lower_truncated(np.full(40_000, 1.0), 2.0, np.full(40_000, bound), rng)
        reference = stats.truncnorm((bound - 1.0) / 2.0, np.inf, loc=1.0, scale=2.0)
        assert draws.mean() == pytest.approx(reference.mean(), abs=5 * reference.std() / 200)
        assert draws.var() == pytest.approx(reference.var(), rel=0.05)

    @pytest.mark.parametrize("bound", [-2.0, 0.0, 1.5, 6.0])
    def test_closed_form_moments(self, bound):
        mean, var = lower_truncated_moments(np.array([0.5]), 1.5, np.array([bound]))
        reference = stats.truncnorm((bound - 0.5) / 1.5, np.inf, loc=0.5, scale=1.5)
        assert mean[0] == pytest.approx(reference.mean(), rel=1e-9)
        assert var[0] == pytest.approx(reference.var(), rel=1e-6)

    def test_far_tail_stays_finite(self):
        mean, var = lower_truncated_moments(np.array([0.0]), 1.0, np.array([45.0]))
        assert 45.0 < mean[0] < 45.1
        assert 0.0 <= var[0] < 1e-3


class TestGibbs:
    def test_conjugate_posterior_mean(self):
        ds = make_dataset(n=60, q_genes=3, seed=5)
        cfg = _cfg(v0=1.0, v1=1.0, iterations=6000, burn_in=1000)
        fit = fit_gibbs(ds, make_priors(ds), cfg)
        x, y = assemble_design(ds).x, ds.outcome.y
        exact = np.linalg.solve(np.eye(x.shape[1]) / cfg.v1 + x.T @ x, x.T @ y)
        assert np.all(np.abs(fit.beta_hat - exact) <= 3.0 * fit.beta_mcse)

    def test_survival_without_censoring_matches_continuous(self):
        survival = make_dataset(n=40, q_genes=3, seed=6, survival=True)
        continuous = survival.with_outcome(ContinuousOutcome(survival.outcome.z))
        priors = make_priors(survival)
        a = fit_gibbs(survival, priors, _cfg())
        b = fit_gibbs(continuous, priors, _cfg())
        np.testing.assert_array_equal(a.pip, b.pip)
        np.testing.assert_array_equal(a.beta_hat, b.beta_hat)

    def test_censored_survival_runs(self):
        ds = make_dataset(n=40, q_genes=3, seed=7, survival=True, censor_fraction=0.3)
        fit = fit_gibbs(ds, make_priors(ds), _cfg())
        assert np.all((fit.pip >= 0) & (fit.pip <= 1))
        assert np.isfinite(fit.log_post_trace).all()

    def test_same_seed_same_fit(self):
        ds = make_dataset(n=30, q_genes=4, seed=8)
        first = fit_gibbs(ds, make_priors(ds), _cfg())
        second = fit_gibbs(ds, make_priors(ds), _cfg())
        np.testing.assert_array_equal(first.beta_hat, second.beta_hat)
        assert first.to_dict() == second.to_dict()

    def test_ranks_true_effect_first(self):
        ds = make_dataset(n=80, q_genes=4, seed=9, effects=(2.0,))
        fit = fit_gibbs(ds, make_priors(ds), _cfg())
        assert int(np.argmax(fit.pip)) == 0
        assert fit.pip[0] > 0.9

    def test_posterior_spread(self):
        ds = make_dataset(n=40, q_genes=3, seed=16)
        fit = fit_gibbs(ds, make_priors(ds), _cfg())
        assert fit.beta_sd.shape == fit.beta_hat.shape
        assert np.all(fit.beta_sd >= 0)
        assert np.all(fit.beta_mcse <= fit.beta_sd + 1e-12)

    @pytest.mark.slow
    def test_equal_slabs_recover_prior_means(self):
        # v0 == v1 leaves the likelihood blind to gamma, so PIPs fall back to the prior
        ds = make_dataset(n=40, q_genes=3, seed=18, effects=())
        priors = make_priors(ds, [0.0, 1.5, 3.0])
        fit = fit_gibbs(ds, priors, _cfg(v0=1.0, v1=1.0, iterations=20_000, burn_in=1_000))
        expected = np.array([p.prior_mean for p in priors])
        assert np.all(np.abs(fit.pip - expected) <= 3.0 * fit.pip_mcse)

    def test_zero_iterations(self):
        ds = make_dataset()
        with pytest.raises(ZeroIterations):
            fit_gibbs(ds, make_priors(ds), CbvsConfig(iterations=0))

    def test_inclusion_weight_conditional(self):
        rng = np.random.default_rng(3)
        draws = draw_inclusion_weights(np.ones(50_000), np.ones(50_000), rng)
        assert draws.mean() == pytest.approx(2.0 / 3.0, abs=0.005)
        assert draws.var() == pytest.approx(1.0 / 18.0, abs=0.002)


class TestSelectionMcmc:
    def test_deterministic_and_counts_retained_draws(self):
        ds = make_dataset(n=40, q_genes=4, seed=10)
        cfg = _cfg(algorithm=Algorithm.SELECTION_MCMC)
        first = fit_selection_mcmc(ds, make_priors(ds), cfg)
        second = fit_selection_mcmc(ds, make_priors(ds), cfg)
        assert first.to_dict() == second.to_dict()
        assert sum(first.model_counts.values()) == cfg.iterations - cfg.burn_in
        assert all(len(key) == 4 for key in first.model_counts)
        assert 0.0 < first.acceptance_rate <= 1.0

    def test_literal_weighting_runs(self):
        ds = make_dataset(n=40, q_genes=3, seed=12)
        cfg = _cfg(algorithm=Algorithm.SELECTION_MCMC, bma_weighting=BmaWeighting.NEGATIVE_LOG_POSTERIOR)
        fit = fit_selection_mcmc(ds, make_priors(ds), cfg)
        assert np.isfinite(fit.beta_hat).all()

    def test_without_proposal_correction(self):
        ds = make_dataset(n=40, q_genes=4, seed=17)
        cfg = _cfg(algorithm=Algorithm.SELECTION_MCMC, hastings_correction=False)
        fit = fit_selection_mcmc(ds, make_priors(ds), cfg)
        assert sum(fit.model_counts.values()) == cfg.iterations - cfg.burn_in
        assert fit.beta_sd.shape == fit.beta_hat.shape == (fit.n_fixed + 4,)

    def test_censored_survival_runs(self):
        ds = make_dataset(n=40, q_genes=3, seed=13, survival=True, censor_fraction=0.25)
        fit = fit_selection_mcmc(ds, make_priors(ds), _cfg(algorithm=Algorithm.SELECTION_MCMC))
        assert np.all((fit.pip >= 0) & (fit.pip <= 1))

    def test_zero_iterations(self):
        ds = make_dataset()
        with pytest.raises(ZeroIterations):
            fit_selection_mcmc(ds, make_priors(ds), CbvsConfig(iterations=0))

    def test_no_selectable_covariates(self):
        ds = make_dataset(q_genes=0, effects=())
        with pytest.raises(AllMovesImpossible):
            fit_selection_mcmc(ds, [], _cfg())

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", [14, 114, 214])
    def test_visit_frequencies_match_enumeration(self, seed):
        ds = make_dataset(n=30, q_genes=8, seed=seed, effects=(2.0, -1.5, 1.0))
        priors = make_priors(ds, [3.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        cfg = _cfg(algorithm=Algorithm.SELECTION_MCMC, iterations=50_000, burn_in=5_000, seed=seed)
        fit = fit_selection_mcmc(ds, priors, cfg)
        exact = enumerate_posterior(ds, priors, cfg)
        total = sum(fit.model_counts.values())
        tv = 0.5 * sum(abs(fit.model_counts.get(k, 0) / total - p) for k, p in exact.items())
        assert tv < 0.05

    @pytest.mark.slow
    def test_noise_pips_match_enumeration(self):
        ds = make_dataset(n=60, q_genes=5, seed=15, effects=())
        priors = make_priors(ds)
        cfg = _cfg(algorithm=Algorithm.SELECTION_MCMC, iterations=40_000, burn_in=4_000)
        fit = fit_selection_mcmc(ds, priors, cfg)
        exact = enumerate_posterior(ds, priors, cfg)
        for j in range(5):
            marginal = sum(p for k, p in exact.items() if k[j] == "1")
            assert fit.pip[j] == pytest.approx(marginal, abs=0.03)


def test_engine_dispatch():
    ds = make_dataset(n=30, q_genes=3)
    for algorithm in Algorithm:
        fit = fit_cbvs(ds, make_priors(ds), _cfg(algorithm=algorithm, iterations=400, burn_in=100))
        assert fit.algorithm is algorithm
        assert fit.covariate_ids == ("g0", "g1", "g2")
