"""Temporal split protocol and accuracy metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, TooFewSegments

N_SPLITS = 10
LABELED, UNLABELED, VALIDATION, TEST = 0, slice(1, 7), 7, slice(8, 10)


@dataclass(frozen=True)
class SplitPlan:
    """Ten disjoint id-sets in temporal order.

    Split 1 is labeled, 2-7 are unlabeled training data, 8 is validation and
    9-10 are test (0-based indices 0, 1..6, 7, 8..9).
    """

    splits: tuple

    def __post_init__(self):
        if len(self.splits) != N_SPLITS:
            raise ValueError(f"expected {N_SPLITS} splits, got {len(self.splits)}")
        object.__setattr__(
            self, "splits", tuple(np.asarray(s, dtype=np.int64) for s in self.splits)
        )

    @property
    def labeled(self) -> np.ndarray:
        return self.splits[LABELED]

    @property
    def unlabeled(self) -> list:
        return list(self.splits[UNLABELED])

    @property
    def validation(self) -> np.ndarray:
        return self.splits[VALIDATION]

    @property
    def test(self) -> np.ndarray:
        return np.concatenate(self.splits[TEST])

    def all_ids(self) -> np.ndarray:
        return np.concatenate(self.splits)


def make_temporal_splits(ids, labels) -> SplitPlan:
    """Stratified temporal tenths.

    ``ids`` must be in temporal order. For every class, its ids (in that
    order) are cut into ten contiguous, near-equal chunks and chunk ``i`` goes
    to split ``i``.
    """
    ids = np.asarray(ids, dtype=np.int64)
    labels = np.asarray(labels)
    if ids.shape != labels.shape:
        raise LengthMismatch(f"{ids.size} ids but {labels.size} labels")
    parts = [[] for _ in range(N_SPLITS)]
    for cls in np.unique(labels):
        cls_ids = ids[labels == cls]
        if cls_ids.size < N_SPLITS:
            raise TooFewSegments(
                f"class {cls} has {cls_ids.size} segments, need at least {N_SPLITS}"
            )
        for i, chunk in enumerate(np.array_split(cls_ids, N_SPLITS)):
            parts[i].append(chunk)
    return SplitPlan(tuple(np.concatenate(p) for p in parts))


def evaluate(predictions, truth) -> float:
    """Fraction of exact matches."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise LengthMismatch(f"{predictions.size} predictions vs {truth.size} labels")
    if truth.size == 0:
        raise LengthMismatch("cannot score an empty prediction set")
    return float(np.mean(predictions == truth))


def summarize(values) -> dict:
    """Mean, sample std and normal-approximation 95% CI over repetitions."""
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    n = v.size
    if n == 0:
        return {"mean": float("nan"), "std": float("nan"),
                "ci95_low": float("nan"), "ci95_high": float("nan"), "n": 0}
    mean = float(v.mean())
    std = float(v.std(ddof=1)) if n > 1 else 0.0
    half = 1.959963984540054 * std / math.sqrt(n)
    return {"mean": mean, "std": std, "ci95_low": mean - half,
            "ci95_high": mean + half, "n": n}
