"""Independent random streams derived from a master seed and a task id."""

import numpy as np


def derive_seed(master_seed: int, *task: int) -> int:
    """Stable 63-bit seed for the task identified by ``task`` under ``master_seed``."""
    seq = np.random.SeedSequence([int(master_seed), *(int(t) for t in task)])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(master_seed: int, *task: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *(int(t) for t in task)]))
