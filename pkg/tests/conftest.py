import itertools
from pathlib import Path

import numpy as np
import pytest

import fibag
from fibag.calibration.calibrate import calibrate
from fibag.cbvs.posterior import log_collapsed_posterior
from fibag.data.models import ContinuousOutcome, IngestConfig, OmicsDataset, SurvivalOutcome

EXAMPLE_DIR = Path(fibag.__file__).parent / "example_data"


def make_dataset(
    n: int = 30,
    q_genes: int = 3,
    q_proteins: int = 0,
    seed: int = 0,
    *,
    effects: tuple[float, ...] = (1.5,),
    n_covariates: int = 0,
    survival: bool = False,
    censor_fraction: float = 0.0,
) -> OmicsDataset:
    """Centered synthetic dataset; the first ``len(effects)`` genes drive the outcome."""
    rng = np.random.default_rng(seed)
    upstream = rng.standard_normal((n, q_genes))
    genes = 0.8 * upstream + rng.standard_normal((n, q_genes))
    proteins = rng.standard_normal((n, q_proteins))
    covariates = rng.standard_normal((n, n_covariates)) if n_covariates else None
    beta = np.zeros(q_genes)
    beta[: len(effects)] = effects
    y = genes @ beta + rng.standard_normal(n)
    genes = genes - genes.mean(axis=0)
    proteins = proteins - proteins.mean(axis=0)

    if survival:
        delta = (rng.random(n) >= censor_fraction).astype(float)
        outcome = SurvivalOutcome(y, delta)
    else:
        outcome = ContinuousOutcome(y)
    return OmicsDataset(
        sample_ids=tuple(f"s{i}" for i in range(n)),
        upstream=upstream,
        upstream_ids=tuple(f"u{j}" for j in range(q_genes)),
        upstream_platforms=("cna",) * q_genes,
        genes=genes,
        gene_ids=tuple(f"g{j}" for j in range(q_genes)),
        proteins=proteins,
        protein_ids=tuple(f"p{j}" for j in range(q_proteins)),
        outcome=outcome,
        covariates=covariates,
        covariate_ids=tuple(f"b{j}" for j in range(n_covariates)),
        genes_centered=True,
        proteins_centered=True,
    )


def example_ingest(outcome: str = "outcome.csv") -> IngestConfig:
    return IngestConfig(
        upstream={"cna": EXAMPLE_DIR / "cna.csv", "meth": EXAMPLE_DIR / "meth.csv"},
        genes=EXAMPLE_DIR / "genes.csv",
        proteins=EXAMPLE_DIR / "proteins.csv",
        covariates=EXAMPLE_DIR / "covariates.csv",
        outcome=EXAMPLE_DIR / outcome,
        biomarker_map=EXAMPLE_DIR / "map.txt",
    )


def make_priors(ds: OmicsDataset, lbfs=None):
    lbfs = lbfs if lbfs is not None else [0.0] * len(ds.selectable_ids)
    return [calibrate(s, covariate_id=cid) for s, cid in zip(lbfs, ds.selectable_ids)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def example_dir() -> Path:
    return EXAMPLE_DIR


def enumerate_posterior(ds: OmicsDataset, priors, cfg) -> dict[str, float]:
    """Exact model probabilities by enumeration, keyed by the indicator string."""
    q = len(ds.selectable_ids)
    models = [np.array(bits, dtype=np.int8) for bits in itertools.product([0, 1], repeat=q)]
    logs = np.array([log_collapsed_posterior(g, ds, priors, cfg) for g in models])
    probs = np.exp(logs - logs.max())
    probs /= probs.sum()
    return {"".join(str(int(b)) for b in g): float(pr) for g, pr in zip(models, probs)}
