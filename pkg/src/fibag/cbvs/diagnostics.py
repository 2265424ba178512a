"""Running summaries of retained draws: means, spreads and batch-means MCSE."""

import numpy as np


class BatchMeans:
    """Accumulates vector draws into mean, standard deviation and MCSE.

    ``total`` fixes the number of draws up front so batches have equal size;
    leftover draws count toward the mean but not the MCSE.
    """

    def __init__(self, dim: int, total: int, batches: int) -> None:
        self._batches = max(1, min(batches, total))
        self._batch_size = max(1, total // self._batches)
        self._sum = np.zeros(dim)
        self._sum_sq = np.zeros(dim)
        self._batch_sum = np.zeros(dim)
        self._batch_means: list[np.ndarray] = []
        self.count = 0

    def add(self, draw: np.ndarray) -> None:
        self._sum += draw
        self._sum_sq += draw * draw
        self._batch_sum += draw
        self.count += 1
        if self.count % self._batch_size == 0 and len(self._batch_means) < self._batches:
            self._batch_means.append(self._batch_sum / self._batch_size)
            self._batch_sum = np.zeros_like(self._batch_sum)

    @property
    def mean(self) -> np.ndarray:
        return self._sum / max(self.count, 1)

    @property
    def sd(self) -> np.ndarray:
        mean = self.mean
        return np.sqrt(np.maximum(self._sum_sq / max(self.count, 1) - mean * mean, 0.0))

    @property
    def mcse(self) -> np.ndarray:
        if len(self._batch_means) < 2:
            return np.full_like(self._sum, np.nan)
        means = np.vstack(self._batch_means)
        return means.std(axis=0, ddof=1) / np.sqrt(len(self._batch_means))


def retained_count(iterations: int, burn_in: int, thin: int) -> int:
    return len(range(burn_in, iterations, thin))


def is_retained(iteration: int, burn_in: int, thin: int) -> bool:
    return iteration >= burn_in and (iteration - burn_in) % thin == 0
