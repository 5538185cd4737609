"""Per-class least-squares decision fusion of the time and TF classifiers."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateColumn, IoFailure, ShapeMismatch

STANDARDIZE_EPS = 1e-6


class AllZeroRowsWarning(UserWarning):
    """Both models output identically zero for a class; its weights are [0, 0]."""


@dataclass(frozen=True)
class FusionWeights:
    beta_time: np.ndarray
    beta_tf: np.ndarray

    def to_dict(self) -> dict:
        return {
            "beta_time": [float(v) for v in self.beta_time],
            "beta_tf": [float(v) for v in self.beta_tf],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionWeights":
        bt = np.asarray(d["beta_time"], dtype=np.float64)
        bf = np.asarray(d["beta_tf"], dtype=np.float64)
        if bt.shape != bf.shape or bt.ndim != 1:
            raise DataError("beta_time and beta_tf must be vectors of equal length")
        return cls(bt, bf)

    def save(self, path) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict()))
        except OSError as exc:
            raise IoFailure(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "FusionWeights":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except OSError as exc:
            raise IoFailure(str(exc)) from exc

    @classmethod
    def identity(cls, n_classes: int) -> "FusionWeights":
        return cls(np.ones(n_classes), np.zeros(n_classes))


def _check_pair(yt, ytf):
    yt = np.asarray(yt, dtype=np.float64)
    ytf = np.asarray(ytf, dtype=np.float64)
    if yt.ndim != 2 or yt.shape != ytf.shape:
        raise ShapeMismatch(f"prediction shapes differ: {yt.shape} vs {ytf.shape}")
    return yt, ytf


def fit_fusion_weights(yt, ytf, truth) -> FusionWeights:
    """Solve the 2x2 normal equations for every class.

    A rank-deficient design (e.g. both models emitting the same row) falls
    back to the minimum-norm least-squares solution.
    """
    yt, ytf = _check_pair(yt, ytf)
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != yt.shape:
        raise ShapeMismatch(f"labels {truth.shape} do not match predictions {yt.shape}")
    N, P = yt.shape
    if P < 2:
        raise ShapeMismatch("need at least two samples to fit fusion weights")
    beta = np.zeros((N, 2))
    for n in range(N):
        Yn = np.vstack([yt[n], ytf[n]])
        gram = Yn @ Yn.T
        rhs = Yn @ truth[n]
        if not np.any(Yn):
            warnings.warn(f"class {n}: both models output zero; weights set to [0, 0]",
                          AllZeroRowsWarning, stacklevel=2)
            continue
        if np.linalg.matrix_rank(Yn) == 2:
            beta[n] = np.linalg.solve(gram, rhs)
        else:
            beta[n] = np.linalg.pinv(Yn.T) @ truth[n]
    return FusionWeights(beta[:, 0], beta[:, 1])


def fuse(yt, ytf, w: FusionWeights) -> np.ndarray:
    """Row n of the result is ``beta_time[n]*yt[n] + beta_tf[n]*ytf[n]``."""
    yt, ytf = _check_pair(yt, ytf)
    if w.beta_time.shape != (yt.shape[0],) or w.beta_tf.shape != (yt.shape[0],):
        raise ShapeMismatch(f"weights for {w.beta_time.shape} classes, predictions have {yt.shape[0]}")
    return w.beta_time[:, np.newaxis] * yt + w.beta_tf[:, np.newaxis] * ytf


def standardize(raw, eps: float = STANDARDIZE_EPS) -> np.ndarray:
    """Make every column strictly positive and sum to one.

    Columns whose minimum is <= 0 are first shifted by ``-min + eps``.
    """
    raw = np.array(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise DataError("fused matrix contains NaN or Inf")
    col_min = raw.min(axis=0)
    shift = np.where(col_min <= 0, -col_min + eps, 0.0)
    raw += shift
    sums = raw.sum(axis=0)
    if np.any(sums <= 0):
        raise DegenerateColumn("column sums to zero after shifting")
    return raw / sums


def decide(fused) -> np.ndarray:
    """Argmax per column; ties go to the lowest class index."""
    return np.argmax(np.asarray(fused), axis=0)
