"""Dual-domain fusion self-training loop and the single-model baseline.

Each step first offers the next unlabeled split (plus the residue rejected
earlier) to the models of the previous step, accepts confident,
class-balanced pseudo-labels, and then retrains the time model, the TF model
and the fusion weights on labeled + pseudo-labeled data. Step 1 is plain
supervised training on split 1.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import classifiers as clf
from .errors import ConfigError, EmptyLabeledPool, ShapeMismatch
from .fusion import FusionWeights, decide, fit_fusion_weights, fuse, standardize
from .protocol import SplitPlan, evaluate

METHODS = ("ddf", "self-training")


@dataclass(frozen=True)
class SslData:
    """Both feature views of every segment, indexed by segment id."""

    X_time: np.ndarray
    X_tf: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        if not (len(self.X_time) == len(self.X_tf) == len(self.labels)):
            raise ShapeMismatch("views and labels must have the same number of rows")


@dataclass(frozen=True)
class SslConfig:
    xi: float = 0.5
    steps: int = 7
    repetitions: int = 3
    seed: int = 0
    time_classifier: clf.ClassifierSpec = field(default_factory=clf.ClassifierSpec)
    tf_classifier: clf.ClassifierSpec = field(default_factory=clf.ClassifierSpec)
    # "pool": labeled + pseudo-labeled ids; "labeled": ground-truth ids only
    fusion_fit: str = "pool"
    # >= 2: fusion weights see k-fold out-of-fold predictions; 0: in-sample
    fusion_folds: int = 0

    def __post_init__(self):
        if not 0 <= self.xi < 1:
            raise ConfigError(f"xi must lie in [0, 1), got {self.xi}")
        if not 1 <= self.steps <= 7:
            raise ConfigError(f"steps must lie in [1, 7], got {self.steps}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.fusion_fit not in ("pool", "labeled"):
            raise ConfigError(f"fusion_fit must be 'pool' or 'labeled', got {self.fusion_fit!r}")
        if self.fusion_folds == 1 or self.fusion_folds < 0:
            raise ConfigError(f"fusion_folds must be 0 or >= 2, got {self.fusion_folds}")

    def with_xi(self, xi: float) -> "SslConfig":
        return dataclasses.replace(self, xi=xi)


@dataclass
class StepReport:
    repetition: int
    step: int
    pool_labeled: int
    pool_pseudo: int
    accepted: int
    acc_time: float
    acc_tf: float | None
    acc_fused: float
    val_time: float = float("nan")
    val_tf: float | None = None
    val_fused: float = float("nan")
    weights: FusionWeights | None = None
    accepted_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    accepted_labels: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    accepted_conf: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class SslState:
    labeled_ids: np.ndarray
    labeled_y: np.ndarray
    pseudo_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    pseudo_y: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    pseudo_conf: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residue: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    offered_splits: int = 0
    step: int = 0
    time_model: clf.Model | None = None
    tf_model: clf.Model | None = None
    weights: FusionWeights | None = None

    def train_ids(self) -> np.ndarray:
        return np.concatenate([self.labeled_ids, self.pseudo_ids])

    def train_labels(self) -> np.ndarray:
        return np.concatenate([self.labeled_y, self.pseudo_y])


# -- selection ----------------------------------------------------------------

def threshold_select(fused, ids, xi: float) -> list:
    """Per-class candidate lists of ``(id, confidence)``.

    A sample is a candidate for its argmax class iff that maximum strictly
    exceeds ``xi``.
    """
    fused = np.asarray(fused)
    ids = np.asarray(ids)
    labels = decide(fused)
    conf = fused[labels, np.arange(fused.shape[1])]
    out = [[] for _ in range(fused.shape[0])]
    for i in np.flatnonzero(conf > xi):
        out[labels[i]].append((int(ids[i]), float(conf[i])))
    return out


def balance_classes(candidates) -> list:
    """Keep the ``k = min count`` most confident candidates of every class
    (ties broken by lower id)."""
    k = min(len(c) for c in candidates) if candidates else 0
    return [sorted(c, key=lambda t: (-t[1], t[0]))[:k] for c in candidates]


# -- loop -----------------------------------------------------------------------

def _seed(cfg: SslConfig, repetition: int, step: int, view: int) -> int:
    ss = np.random.SeedSequence([cfg.seed, repetition, step, view])
    return int(ss.generate_state(1)[0])


def _fused_predictions(state: SslState, data: SslData, ids: np.ndarray, method: str):
    yt = clf.predict(state.time_model, data.X_time[ids])
    if method == "self-training":
        return yt, None, standardize(yt)
    ytf = clf.predict(state.tf_model, data.X_tf[ids])
    return yt, ytf, standardize(fuse(yt, ytf, state.weights))


def _scores(state: SslState, data: SslData, ids: np.ndarray, method: str):
    truth = data.labels[ids]
    yt, ytf, fused = _fused_predictions(state, data, ids, method)
    acc_time = evaluate(decide(yt), truth)
    if ytf is None:
        return acc_time, None, acc_time
    return acc_time, evaluate(decide(ytf), truth), evaluate(decide(fused), truth)


def _train(state: SslState, data: SslData, cfg: SslConfig, repetition: int, method: str):
    ids = state.train_ids()
    y = state.train_labels()
    if state.labeled_ids.size == 0:
        raise EmptyLabeledPool("no labeled segments to train on")
    N = data.n_classes
    tspec = cfg.time_classifier.with_seed(_seed(cfg, repetition, state.step, 0))
    state.time_model = clf.fit(tspec, data.X_time[ids], y, N)
    if method == "self-training":
        return
    fspec = cfg.tf_classifier.with_seed(_seed(cfg, repetition, state.step, 1))
    state.tf_model = clf.fit(fspec, data.X_tf[ids], y, N)
    if cfg.fusion_fit == "labeled":
        ids, y = state.labeled_ids, state.labeled_y
    if cfg.fusion_folds >= 2:
        yt, ytf = _out_of_fold(data, ids, y, tspec, fspec, cfg.fusion_folds, N)
    else:
        yt = clf.predict(state.time_model, data.X_time[ids])
        ytf = clf.predict(state.tf_model, data.X_tf[ids])
    state.weights = fit_fusion_weights(yt, ytf, clf.one_hot(y, N))


def _folds(y: np.ndarray, k: int) -> np.ndarray:
    """Stratified fold index per sample: the i-th member of a class goes to fold i % k."""
    fold = np.empty(y.size, dtype=np.int64)
    for n in np.unique(y):
        members = np.flatnonzero(y == n)
        fold[members] = np.arange(members.size) % k
    return fold


def _out_of_fold(data, ids, y, tspec, fspec, k, N):
    """Predictions for every training id from models that never saw it."""
    fold = _folds(y, k)
    yt = np.empty((N, ids.size))
    ytf = np.empty((N, ids.size))
    for f in range(k):
        tr, te = fold != f, fold == f
        if not te.any():
            continue
        if np.unique(y[tr]).size < N:
            # a class too small to split; fall back to in-sample predictions
            tr = np.ones_like(tr)
        mt = clf.fit(tspec, data.X_time[ids[tr]], y[tr], N)
        mf = clf.fit(fspec, data.X_tf[ids[tr]], y[tr], N)
        yt[:, te] = clf.predict(mt, data.X_time[ids[te]])
        ytf[:, te] = clf.predict(mf, data.X_tf[ids[te]])
    return yt, ytf


def ddf_step(state: SslState, data: SslData, splits: SplitPlan, cfg: SslConfig,
             next_split=None, repetition: int = 0, method: str = "ddf") -> StepReport:
    """Advance ``state`` by one training step (in place) and report on it."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    accepted_ids = np.zeros(0, np.int64)
    accepted_y = np.zeros(0, np.int64)
    accepted_conf = np.zeros(0)
    if next_split is not None:
        next_split = np.asarray(next_split, dtype=np.int64)
        taken = np.concatenate([state.train_ids(), state.residue])
        if np.intersect1d(next_split, taken).size:
            raise ShapeMismatch("next split overlaps the current pools")
        available = np.concatenate([state.residue, next_split])
        state.offered_splits += 1
        _, _, fused = _fused_predictions(state, data, available, method)
        chosen = balance_classes(threshold_select(fused, available, cfg.xi))
        rows = [(i, n, c) for n, sel in enumerate(chosen) for i, c in sel]
        if rows:
            accepted_ids = np.array([r[0] for r in rows], dtype=np.int64)
            accepted_y = np.array([r[1] for r in rows], dtype=np.int64)
            accepted_conf = np.array([r[2] for r in rows])
        state.pseudo_ids = np.concatenate([state.pseudo_ids, accepted_ids])
        state.pseudo_y = np.concatenate([state.pseudo_y, accepted_y])
        state.pseudo_conf = np.concatenate([state.pseudo_conf, accepted_conf])
        state.residue = np.setdiff1d(available, accepted_ids)
    state.step += 1
    _train(state, data, cfg, repetition, method)

    acc_time, acc_tf, acc_fused = _scores(state, data, splits.test, method)
    val_time, val_tf, val_fused = _scores(state, data, splits.validation, method)
    return StepReport(
        repetition=repetition,
        step=state.step,
        pool_labeled=int(state.labeled_ids.size),
        pool_pseudo=int(state.pseudo_ids.size),
        accepted=int(accepted_ids.size),
        acc_time=acc_time,
        acc_tf=acc_tf,
        acc_fused=acc_fused,
        val_time=val_time,
        val_tf=val_tf,
        val_fused=val_fused,
        weights=state.weights,
        accepted_ids=accepted_ids,
        accepted_labels=accepted_y,
        accepted_conf=accepted_conf,
    )


def run_repetition(cfg: SslConfig, data: SslData, splits: SplitPlan, repetition: int = 0,
                   method: str = "ddf"):
    """One seeded run of ``cfg.steps`` steps; returns ``(reports, final_state)``."""
    labeled = splits.labeled
    state = SslState(labeled, data.labels[labeled].astype(np.int64))
    unlabeled = splits.unlabeled
    reports = []
    for k in range(cfg.steps):
        nxt = unlabeled[k - 1] if k >= 1 else None
        reports.append(ddf_step(state, data, splits, cfg, nxt, repetition, method))
    return reports, state


def _thread_count() -> int:
    n = int(os.environ.get("DDF_THREADS", "0") or 0)
    return n if n > 0 else (os.cpu_count() or 1)


def run_ssl(cfg: SslConfig, data: SslData, splits: SplitPlan, method: str = "ddf",
            keep_state: bool = False):
    """All repetitions of ``method``; results are ordered by repetition."""

    def one(rep):
        reports, state = run_repetition(cfg, data, splits, rep, method)
        return (reports, state) if keep_state else reports

    reps = range(cfg.repetitions)
    workers = min(_thread_count(), cfg.repetitions)
    if workers == 1:
        return [one(r) for r in reps]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, reps))


def run_ddf(cfg: SslConfig, data: SslData, splits: SplitPlan):
    return run_ssl(cfg, data, splits, "ddf")


def run_self_training(cfg: SslConfig, data: SslData, splits: SplitPlan):
    return run_ssl(cfg, data, splits, "self-training")
