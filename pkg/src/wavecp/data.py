"""Dataset containers shared by generators, trainers, and set predictors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Example(NamedTuple):
    """One labeled example: feature vector plus discrete label or scalar target."""

    x: np.ndarray
    y: float | int


@dataclass
class Dataset:
    """A batch of examples stored column-wise.

    ``x`` has shape (n, d) in float64. ``y`` holds int64 labels for
    classification tasks or float64 targets for regression.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y)
        if self.x.ndim != 2:
            raise ValueError(f"x must be 2-D (n, d), got shape {self.x.shape}")
        if self.y.ndim != 1 or len(self.y) != len(self.x):
            raise ValueError(
                f"y must be 1-D with length {len(self.x)}, got shape {self.y.shape}"
            )

    def __len__(self):
        return len(self.x)

    @property
    def n_features(self):
        return self.x.shape[1]

    def example(self, i: int) -> Example:
        return Example(self.x[i], self.y[i])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.y[idx])
