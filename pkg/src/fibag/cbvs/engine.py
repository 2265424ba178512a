"""Single entry point over the three fitting engines."""

import logging
from collections.abc import Sequence

from fibag.calibration.models import CalibratedPrior
from fibag.cbvs.emvs import fit_emvs
from fibag.cbvs.gibbs import fit_gibbs
from fibag.cbvs.models import Algorithm, CbvsConfig, CbvsFit
from fibag.cbvs.selection_mcmc import fit_selection_mcmc
from fibag.data.models import OmicsDataset

logger = logging.getLogger(__name__)

_ENGINES = {
    Algorithm.GIBBS: fit_gibbs,
    Algorithm.SELECTION_MCMC: fit_selection_mcmc,
    Algorithm.EMVS: fit_emvs,
}


def fit_cbvs(ds: OmicsDataset, priors: Sequence[CalibratedPrior], cfg: CbvsConfig) -> CbvsFit:
    logger.info(
        "Fitting %s on n=%d with %d selectable covariates (%s outcome, seed %s)",
        cfg.algorithm.value, ds.n, len(ds.selectable_ids), ds.outcome.kind.value, cfg.seed,
    )
    return _ENGINES[cfg.algorithm](ds, priors, cfg)
