"""Set predictors with finite-sample coverage targets.

Three constructions over a shared log-loss nonconformity score:

- :func:`npb_set`: the smallest set whose predictive mass reaches 1 - alpha.
  No coverage guarantee; it reflects whatever the model believes.
- validation-based (:func:`vb_cp_sets`): scores on a held-out calibration
  split, thresholded at an empirical quantile chosen so that exchangeable
  test points are covered with probability at least 1 - alpha.
- cross-validation-based (:func:`kcv_cp_sets`): every example calibrates the
  fold model that never saw it; a rank-count test admits labels. Coverage is
  at least 1 - 2*alpha, with far less data spent than a held-out split.

``folds == n`` turns the cross-validation construction into the leave-one-out
variant. All thresholds use exact rank arithmetic with a 1e-9 guard so that
decimal levels like 0.1 behave as written rather than as their nearest
binary float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset
from .diffcore import PROB_FLOOR
from .errors import ConfigError

# Absolute slack applied before ceil/floor in rank computations; see module
# docstring.
_RANK_EPS = 1e-9


@dataclass(frozen=True)
class PredictionSet:
    """An unordered set of candidate labels."""

    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(sorted(int(y) for y in self.labels)))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "PredictionSet":
        return cls(tuple(np.flatnonzero(mask)))

    def __contains__(self, y) -> bool:
        return int(y) in self.labels

    def __len__(self):
        return len(self.labels)

    @property
    def size(self) -> int:
        """Set cardinality; the inefficiency of a set prediction."""
        return len(self.labels)


@dataclass(frozen=True)
class PredictionInterval:
    """A closed real interval; ``hi < lo`` denotes the empty interval."""

    lo: float
    hi: float

    @property
    def size(self) -> float:
        return max(self.hi - self.lo, 0.0)

    def __contains__(self, y) -> bool:
        return self.lo <= float(y) <= self.hi


@dataclass(frozen=True)
class CPConfig:
    """Settings shared by the calibrated set predictors.

    ``cv_alpha_mode`` selects the level handed to the cross-validation
    construction: "alpha" uses the nominal level (guarantee 1 - 2*alpha),
    "alpha_half" halves it so the guarantee matches 1 - alpha.
    """

    alpha: float = 0.1
    folds: int = 4
    cv_alpha_mode: str = "alpha"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")
        if self.cv_alpha_mode not in ("alpha", "alpha_half"):
            raise ConfigError(f"unknown cv_alpha_mode {self.cv_alpha_mode!r}")

    @property
    def cv_alpha(self) -> float:
        return self.alpha / 2.0 if self.cv_alpha_mode == "alpha_half" else self.alpha


def nc_scores(predictor, x: np.ndarray) -> np.ndarray:
    """Log-loss nonconformity of every label for rows ``x``: -log p(y | x).

    Returns shape (n, n_labels); probabilities are floored so scores stay
    finite. ``predictor`` only needs a ``predict_proba`` method.
    """
    x = np.asarray(x, dtype=np.float64)
    probs = predictor.predict_proba(x if x.ndim == 2 else x[None, :])
    return -np.log(np.maximum(probs, PROB_FLOOR))


def nc_score_logloss(predictor, x: np.ndarray, y: int) -> float:
    """Nonconformity of a single labeled example."""
    return float(nc_scores(predictor, np.asarray(x))[0, int(y)])


def labeled_nc_scores(predictor, data: Dataset) -> np.ndarray:
    """Nonconformity of each example in ``data`` at its own label."""
    scores = nc_scores(predictor, data.x)
    return np.take_along_axis(scores, data.y.astype(np.int64)[:, None], axis=1)[:, 0]


def quantile_rank(n: int, alpha: float) -> int:
    """Position (1-based) of the calibration quantile among n values and +inf."""
    return math.ceil((1.0 - alpha) * (n + 1) - _RANK_EPS)


def empirical_quantile_from_top(values: Sequence[float], alpha: float) -> float:
    """Conservative upper quantile of ``values`` augmented with +inf.

    Returns the r-th smallest of the n values plus a virtual +inf, where
    r = ceil((1 - alpha) * (n + 1)). With alpha = 0.1 and n = 9 this is the
    9th of 10, i.e. the largest finite value.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ConfigError("expected a flat array of scores")
    r = quantile_rank(values.size, alpha)
    if r > values.size:
        return math.inf
    return float(np.partition(values, r - 1)[r - 1])


def npb_set(probs: np.ndarray, alpha: float) -> PredictionSet:
    """Smallest label set whose total probability reaches 1 - alpha.

    Labels are added in order of decreasing probability, lower label first
    on ties, until the running mass reaches the target. ``alpha = 0`` asks
    for full mass and returns every label of a strictly positive vector.
    """
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must lie in [0, 1), got {alpha}")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise ConfigError("expected a flat probability vector")
    if probs.min() < 0.0 or abs(probs.sum() - 1.0) > 1e-6:
        raise ConfigError("probabilities must be non-negative and sum to one")
    order = np.lexsort((np.arange(probs.size), -probs))
    mass = np.cumsum(probs[order])
    k = int(np.searchsorted(mass, 1.0 - alpha)) + 1
    k = min(k, probs.size)
    return PredictionSet(tuple(order[:k]))


def vb_split(data: Dataset, rng: np.random.Generator):
    """Random half split into (proper training set, calibration set).

    After a seeded shuffle, even positions train and odd positions
    calibrate, so an odd-sized dataset gives the extra example to training.
    """
    perm = rng.permutation(len(data))
    return data.subset(perm[0::2]), data.subset(perm[1::2])


def vb_set_from_scores(
    cand_scores: np.ndarray, cal_scores: np.ndarray, alpha: float
) -> PredictionSet:
    """Validation-based set from precomputed scores for one test point."""
    threshold = empirical_quantile_from_top(cal_scores, alpha)
    return PredictionSet.from_mask(np.asarray(cand_scores) <= threshold)


def vb_cp_sets(predictor, cal: Dataset, x: np.ndarray, alpha: float) -> list:
    """Validation-based prediction sets for each row of ``x``.

    ``predictor`` must have been trained without seeing ``cal``. Every label
    whose nonconformity is at most the calibration quantile is admitted; an
    exchangeable test point is covered with probability at least 1 - alpha.
    """
    threshold = empirical_quantile_from_top(labeled_nc_scores(predictor, cal), alpha)
    scores = nc_scores(predictor, x)
    return [PredictionSet.from_mask(row <= threshold) for row in scores]


def vb_cp_predict(predictor, cal: Dataset, x: np.ndarray, alpha: float) -> PredictionSet:
    """Validation-based prediction set for a single feature vector."""
    return vb_cp_sets(predictor, cal, np.asarray(x)[None, :], alpha)[0]


def make_folds(n: int, k: int, rng: np.random.Generator) -> list:
    """Partition ``range(n)`` into ``k`` equal folds after a seeded shuffle."""
    if k < 2 or k > n:
        raise ConfigError(f"folds must lie in [2, {n}], got {k}")
    if n % k:
        raise ConfigError(f"fold count {k} must divide the training size {n}")
    perm = rng.permutation(n)
    size = n // k
    return [np.sort(perm[i * size : (i + 1) * size]) for i in range(k)]


def membership_threshold(n: int, alpha: float) -> int:
    """Minimum rank-count for a label to enter a cross-validation set."""
    return math.floor(alpha * (n + 1) + _RANK_EPS)


def kcv_set_from_scores(
    cand_scores: Sequence[np.ndarray],
    fold_cal_scores: Sequence[np.ndarray],
    alpha: float,
) -> PredictionSet:
    """Cross-validation set from precomputed scores for one test point.

    ``cand_scores[k]`` holds fold model k's score for every candidate label;
    ``fold_cal_scores[k]`` holds that model's scores on its own held-out
    fold. A label enters the set when the number of calibration scores at
    least as large as the candidate's, summed over folds, reaches
    floor(alpha * (n + 1)).
    """
    if len(cand_scores) != len(fold_cal_scores):
        raise ConfigError("need candidate scores for every fold")
    n = sum(len(s) for s in fold_cal_scores)
    counts = np.zeros(np.asarray(cand_scores[0]).size)
    for cand, cal in zip(cand_scores, fold_cal_scores):
        cal = np.sort(np.asarray(cal, dtype=np.float64))
        counts += cal.size - np.searchsorted(cal, np.asarray(cand), side="left")
    return PredictionSet.from_mask(counts >= membership_threshold(n, alpha))


def kcv_cp_sets(
    fold_predictors: Sequence, fold_cal: Sequence[Dataset], x: np.ndarray, alpha: float
) -> list:
    """Cross-validation prediction sets for each row of ``x``.

    ``fold_predictors[k]`` must have been trained on everything except
    ``fold_cal[k]``, and the folds must partition one training set into
    equal parts. Coverage is at least 1 - 2*alpha for exchangeable data.
    With one fold per example this is the leave-one-out construction.
    """
    if len(fold_predictors) != len(fold_cal):
        raise ConfigError("need one calibration fold per fold model")
    sizes = {len(c) for c in fold_cal}
    if len(sizes) != 1 or 0 in sizes:
        raise ConfigError("calibration folds must be non-empty and equally sized")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    x = np.asarray(x, dtype=np.float64)
    n = sum(len(c) for c in fold_cal)
    threshold = membership_threshold(n, alpha)
    counts = None
    for predictor, cal in zip(fold_predictors, fold_cal):
        cal_scores = np.sort(labeled_nc_scores(predictor, cal))
        cand = nc_scores(predictor, x)
        c = cal_scores.size - np.searchsorted(cal_scores, cand, side="left")
        counts = c if counts is None else counts + c
    return [PredictionSet.from_mask(row >= threshold) for row in counts]


def kcv_cp_predict(
    fold_predictors: Sequence, fold_cal: Sequence[Dataset], x: np.ndarray, alpha: float
) -> PredictionSet:
    """Cross-validation prediction set for a single feature vector."""
    return kcv_cp_sets(fold_predictors, fold_cal, np.asarray(x)[None, :], alpha)[0]


def nqb_interval(lo_model, hi_model, x: np.ndarray) -> PredictionInterval:
    """Interval between two trained quantile regressors at ``x``.

    ``lo_model``/``hi_model`` are callables returning scalar quantile
    estimates (typically at levels alpha/2 and 1 - alpha/2). The interval
    carries no coverage guarantee.
    """
    return PredictionInterval(float(lo_model(x)), float(hi_model(x)))


def coverage_and_size(sets: Sequence, y: Sequence) -> tuple:
    """Empirical coverage and mean set size over paired predictions/labels."""
    y = np.asarray(y)
    if len(sets) != len(y) or len(y) == 0:
        raise ConfigError("need one non-empty label per prediction set")
    hits = sum(1 for s, label in zip(sets, y) if label in s)
    mean_size = float(np.mean([s.size for s in sets]))
    return hits / len(y), mean_size
