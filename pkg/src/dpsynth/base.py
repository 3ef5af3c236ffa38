"""Estimator plumbing shared by the synthesizers and the DP classifier."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import TabularDataset


def as_generator(random_state) -> np.random.Generator:
    """Resolve an int seed, Generator, or None into a Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive (or infinite)")
    return epsilon


def is_private(epsilon: float) -> bool:
    return not math.isinf(epsilon)


def check_training_dataset(dataset: TabularDataset) -> TabularDataset:
    if not isinstance(dataset, TabularDataset):
        raise TypeError("expected a TabularDataset")
    if dataset.provenance == "test":
        raise ValueError("refusing to fit on a dataset tagged as test data")
    if not dataset.discretized:
        raise ValueError("dataset must be discretized before fitting")
    return dataset


class TabularSynthesizer(BaseEstimator):
    """fit/sample interface shared by the generative models.

    ``fit`` learns from an encoded dataset; ``sample`` draws a synthetic
    dataset (by default the size of the training data). Hyperparameters live
    in ``__init__`` so ``get_params``/``set_params``/``clone`` work as usual.
    """

    def fit(self, dataset: TabularDataset, rng=None) -> "TabularSynthesizer":
        dataset = check_training_dataset(dataset)
        self._fit(dataset, as_generator(self.random_state if rng is None else rng))
        self.n_train_ = dataset.n
        self.schema_ = dataset.schema
        return self

    def sample(self, m: int | None = None, rng=None) -> TabularDataset:
        self.check_fitted()
        m = self.n_train_ if m is None else int(m)
        if m < 1:
            raise ValueError("m must be >= 1")
        return self._sample(m, as_generator(rng))

    def check_fitted(self) -> None:
        if not hasattr(self, "schema_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")

    # subclasses implement these
    def _fit(self, dataset: TabularDataset, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def _sample(self, m: int, rng: np.random.Generator) -> TabularDataset:
        raise NotImplementedError
