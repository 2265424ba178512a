"""FDR-style selection on posterior inclusion probabilities.

``p_j = 1 - pip_j`` are treated as p-value type quantities, sorted ascending
with ties kept in input order, and accumulated as ``r_j``.

* ``cumulative-sum`` (alias ``paper``): select the first ``j*``
  where ``r_j >= alpha`` (crossing index included); when ``r`` never reaches
  ``alpha`` everything is selected.
* ``cumulative-mean``: select the largest prefix whose mean ``r_j / j`` is at
  most ``alpha``; possibly nothing.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Annotated

import numpy as np
from pydantic import BeforeValidator

from fibag.errors import UsageError

logger = logging.getLogger(__name__)

_PIP_SLACK = 1e-9


class EmptyInput(UsageError):
    """Raised when there are no PIPs to select from."""


class AlphaOutOfRange(UsageError):
    """Raised when the FDR level is outside (0, 1]."""


class FdrRule(Enum):
    CUMULATIVE_SUM = "cumulative-sum"
    CUMULATIVE_MEAN = "cumulative-mean"

    @classmethod
    def _missing_(cls, value):
        return RULE_ALIASES.get(value) if isinstance(value, str) else None


# older name of the cumulative-sum rule, still accepted on input
RULE_ALIASES = {"paper": FdrRule.CUMULATIVE_SUM}

# validated through FdrRule() so aliases are accepted in config files
FdrRuleField = Annotated[FdrRule, BeforeValidator(FdrRule)]


@dataclass(frozen=True)
class SelectionResult:
    alpha: float
    rule: FdrRule
    covariate_ids: tuple[str, ...]
    pips: np.ndarray
    order: np.ndarray
    cum_stat: np.ndarray
    j_star: int

    @property
    def selected(self) -> tuple[str, ...]:
        return tuple(self.covariate_ids[k] for k in self.order[: self.j_star])

    @property
    def selected_mask(self) -> np.ndarray:
        """Boolean indicator in input order."""
        mask = np.zeros(len(self.covariate_ids), dtype=bool)
        mask[self.order[: self.j_star]] = True
        return mask

    def rows(self) -> list[dict]:
        return [
            {
                "covariate_id": self.covariate_ids[k],
                "pip": float(self.pips[k]),
                "p": float(1.0 - self.pips[k]),
                "cum_stat": float(self.cum_stat[rank]),
                "selected": rank < self.j_star,
            }
            for rank, k in enumerate(self.order)
        ]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "rule": self.rule.value,
            "j_star": self.j_star,
            "selected": list(self.selected),
        }


def select_fdr(
    pips: Sequence[float] | np.ndarray,
    alpha: float,
    rule: FdrRule = FdrRule.CUMULATIVE_SUM,
    covariate_ids: Sequence[str] | None = None,
) -> SelectionResult:
    values = np.asarray(pips, dtype=float)
    if values.size == 0:
        raise EmptyInput("no PIPs to select from")
    if not 0.0 < alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in (0, 1], got {alpha}")
    if np.any(values < -_PIP_SLACK) or np.any(values > 1.0 + _PIP_SLACK) or not np.all(
        np.isfinite(values)
    ):
        raise UsageError("PIPs must lie in [0, 1]")
    values = np.clip(values, 0.0, 1.0)
    ids = tuple(covariate_ids) if covariate_ids is not None else tuple(
        str(j) for j in range(values.size)
    )
    if len(ids) != values.size:
        raise UsageError(f"{len(ids)} covariate ids for {values.size} PIPs")

    p = 1.0 - values
    order = np.argsort(p, kind="stable")
    r = np.cumsum(p[order])

    if rule is FdrRule.CUMULATIVE_SUM:
        crossed = np.flatnonzero(r >= alpha)
        j_star = int(crossed[0]) + 1 if crossed.size else values.size
        cum_stat = r
    else:
        cum_stat = r / np.arange(1, values.size + 1)
        within = np.flatnonzero(cum_stat <= alpha)
        j_star = int(within[-1]) + 1 if within.size else 0

    logger.info("FDR selection (%s, alpha=%g): %d of %d selected",
                rule.value, alpha, j_star, values.size)
    return SelectionResult(
        alpha=alpha,
        rule=rule,
        covariate_ids=ids,
        pips=values,
        order=order,
        cum_stat=cum_stat,
        j_star=j_star,
    )
