"""Selection-only Metropolis sampler over inclusion indicators.

Each step proposes Add, Delete or Swap with probability 1/3; an impossible
move falls back (Add -> Delete when every indicator is on, Delete -> Add when
none is, Swap -> whichever of the two applies). Coefficients are averaged over
draws from their conditional posterior given the visited model.
"""

import logging
import math
from collections import Counter
from collections.abc import Sequence
from enum import Enum

import numpy as np

from fibag.calibration.models import CalibratedPrior
from fibag.cbvs.design import assemble_design
from fibag.cbvs.diagnostics import BatchMeans, is_retained, retained_count
from fibag.cbvs.models import Algorithm, BmaWeighting, CbvsConfig, CbvsFit
from fibag.cbvs.posterior import CollapsedPosterior, prior_means
from fibag.cbvs.truncnorm import sample_lower_truncated
from fibag.data.models import OmicsDataset, SurvivalOutcome
from fibag.errors import UsageError

logger = logging.getLogger(__name__)


class ZeroIterations(UsageError):
    """Raised when a sampler is asked to run zero iterations."""


class AllMovesImpossible(UsageError):
    """Raised when there are no selectable covariates to move."""


class Move(Enum):
    ADD = "add"
    DELETE = "delete"
    SWAP = "swap"


_MOVES = (Move.ADD, Move.DELETE, Move.SWAP)


def choose_move(included: int, total: int, rng: np.random.Generator) -> Move:
    move = _MOVES[rng.integers(3)]
    if move is Move.ADD and included == total:
        return Move.DELETE
    if move is Move.DELETE and included == 0:
        return Move.ADD
    if move is Move.SWAP:
        if included == 0:
            return Move.ADD
        if included == total:
            return Move.DELETE
    return move


def _add_probability(included: int, total: int) -> float:
    if included == total:
        return 0.0
    return 1.0 if included == 0 else 1.0 / 3.0


def _delete_probability(included: int, total: int) -> float:
    if included == 0:
        return 0.0
    return 1.0 if included == total else 1.0 / 3.0


def log_proposal_ratio(move: Move, included: int, total: int) -> float:
    """log q(new -> old) - log q(old -> new) for a move from a state with ``included`` ones."""
    k, q = included, total
    match move:
        case Move.ADD:
            forward = _add_probability(k, q) / (q - k)
            backward = _delete_probability(k + 1, q) / (k + 1)
        case Move.DELETE:
            forward = _delete_probability(k, q) / k
            backward = _add_probability(k - 1, q) / (q - k + 1)
        case Move.SWAP:
            return 0.0
    return math.log(backward) - math.log(forward)


def propose(gamma: np.ndarray, move: Move, rng: np.random.Generator) -> np.ndarray:
    proposal = gamma.copy()
    if move in (Move.ADD, Move.SWAP):
        proposal[rng.choice(np.flatnonzero(gamma == 0))] = 1
    if move in (Move.DELETE, Move.SWAP):
        proposal[rng.choice(np.flatnonzero(gamma == 1))] = 0
    return proposal


class _WeightedMoments:
    """Weighted first and second moments with weights given on the log scale."""

    def __init__(self, dim: int) -> None:
        self._shift = -math.inf
        self._total = 0.0
        self._sum = np.zeros(dim)
        self._sum_sq = np.zeros(dim)

    def add(self, log_weight: float, draw: np.ndarray) -> None:
        if log_weight > self._shift:
            factor = math.exp(self._shift - log_weight) if self._total else 0.0
            self._total *= factor
            self._sum *= factor
            self._sum_sq *= factor
            self._shift = log_weight
        w = math.exp(log_weight - self._shift)
        self._total += w
        self._sum += w * draw
        self._sum_sq += w * draw * draw

    @property
    def mean(self) -> np.ndarray:
        return self._sum / self._total

    @property
    def sd(self) -> np.ndarray:
        mean = self.mean
        return np.sqrt(np.maximum(self._sum_sq / self._total - mean * mean, 0.0))


def fit_selection_mcmc(
    ds: OmicsDataset,
    priors: Sequence[CalibratedPrior],
    cfg: CbvsConfig,
) -> CbvsFit:
    if cfg.iterations == 0:
        raise ZeroIterations("selection sampler needs at least one iteration")
    q = len(ds.selectable_ids)
    if q == 0:
        raise AllMovesImpossible("no selectable covariates")

    design = assemble_design(ds)
    outcome = ds.outcome
    rng = np.random.default_rng(cfg.seed)
    means = prior_means(priors, design)
    posterior = CollapsedPosterior(design, means, cfg)
    survival = isinstance(outcome, SurvivalOutcome)
    y = np.array(outcome.response, dtype=float)
    censored = outcome.censored if survival else np.zeros(design.n, dtype=bool)
    augment = survival and censored.any()

    gamma = (rng.random(q) < means).astype(np.int8)
    current = posterior.evaluate(gamma, y)

    kept = retained_count(cfg.iterations, cfg.burn_in, cfg.thin)
    pip = BatchMeans(q, kept, cfg.mcse_batches)
    draws = BatchMeans(design.p + 1, kept, cfg.mcse_batches)
    weighted = _WeightedMoments(design.p + 1)
    literal = _WeightedMoments(design.p + 1)
    literal_degenerate = False
    trace: list[float] = []
    visits: Counter[bytes] = Counter()
    accepted = 0

    for it in range(cfg.iterations):
        if augment:
            for _ in range(cfg.survival.sweeps):
                beta, sigma_sq = posterior.draw_coefficients(gamma, y, rng)
                fitted = design.x[censored] @ beta
                y[censored] = sample_lower_truncated(
                    fitted, math.sqrt(sigma_sq), outcome.z[censored], rng
                )
            current = posterior.evaluate(gamma, y)

        k = int(gamma.sum())
        move = choose_move(k, q, rng)
        proposal = propose(gamma, move, rng)
        candidate = posterior.evaluate(proposal, y)
        log_ratio = candidate - current
        if cfg.hastings_correction:
            log_ratio += log_proposal_ratio(move, k, q)
        if math.log(1.0 - rng.random()) < min(0.0, log_ratio):
            gamma, current = proposal, candidate
            accepted += 1

        if is_retained(it, cfg.burn_in, cfg.thin):
            beta, sigma_sq = posterior.draw_coefficients(gamma, y, rng)
            draw = np.append(beta, sigma_sq)
            pip.add(gamma)
            draws.add(draw)
            weighted.add(current, draw)
            if current < 0:
                literal.add(math.log(-current), draw)
            else:
                literal_degenerate = True
            trace.append(current)
            visits[gamma.tobytes()] += 1

    if cfg.bma_weighting is BmaWeighting.SOFTMAX:
        moments = weighted
    elif literal_degenerate:
        logger.warning(
            "Non-negative log posterior visited; negative-log-posterior weights are "
            "undefined, using equal weights"
        )
        moments = draws
    else:
        moments = literal

    acceptance = accepted / cfg.iterations
    logger.info(
        "Selection sampler: %d iterations, acceptance %.3f, %d distinct models retained",
        cfg.iterations, acceptance, len(visits),
    )
    beta_hat = moments.mean[:-1]
    return CbvsFit(
        algorithm=Algorithm.SELECTION_MCMC,
        seed=cfg.seed,
        covariate_ids=design.column_ids[design.n_fixed:],
        design_ids=design.column_ids,
        pip=pip.mean,
        beta_hat=beta_hat,
        beta_raw=design.to_raw(beta_hat),
        sigma_hat=math.sqrt(float(moments.mean[-1])),
        log_post_trace=np.array(trace),
        beta_sd=moments.sd[:-1],
        beta_mcse=draws.mcse[:-1],
        pip_mcse=pip.mcse,
        acceptance_rate=acceptance,
        model_counts={
            "".join("1" if g else "0" for g in np.frombuffer(key, dtype=np.int8)): count
            for key, count in sorted(visits.items())
        },
    )
