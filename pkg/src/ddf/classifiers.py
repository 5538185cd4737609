"""Built-in classifiers for either data view.

Every model maps a ``(P, d)`` feature matrix to an ``(N, P)`` column-stochastic
matrix of normalized logits. Trainable kinds (``softmax_regression``, ``mlp``)
minimize mean softmax cross-entropy plus an L2 penalty with full-batch Adam;
``knn`` memorizes the training set. Features are standardized with the
training mean and standard deviation, which are stored with the model.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DivergedLoss,
    IoFailure,
    MissingClass,
    NonFiniteFeatures,
    ShapeMismatch,
)

KINDS = ("softmax_regression", "mlp", "knn")

_DEFAULTS = {
    "learning_rate": 0.01,
    "epochs": 200,
    "hidden_units": 32,
    "l2": 1e-3,
    "k_neighbors": 5,
    "init_scale": 0.01,
}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "softmax_regression"
    learning_rate: float = _DEFAULTS["learning_rate"]
    epochs: int = _DEFAULTS["epochs"]
    hidden_units: int = _DEFAULTS["hidden_units"]
    l2: float = _DEFAULTS["l2"]
    k_neighbors: int = _DEFAULTS["k_neighbors"]
    init_scale: float = _DEFAULTS["init_scale"]
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.hidden_units < 1:
            raise ConfigError("hidden_units must be >= 1")
        if self.l2 < 0:
            raise ConfigError("l2 must be >= 0")
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if self.init_scale < 0:
            raise ConfigError("init_scale must be >= 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "hidden_units": self.hidden_units,
            "l2": self.l2,
            "k_neighbors": self.k_neighbors,
            "init_scale": self.init_scale,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown classifier fields: {sorted(unknown)}")
        return cls(**d)

    def with_seed(self, seed: int) -> "ClassifierSpec":
        d = self.to_dict()
        d["seed"] = seed
        return ClassifierSpec(**d)


@dataclass
class Model:
    spec: ClassifierSpec
    n_classes: int
    n_features: int
    mean: np.ndarray
    scale: np.ndarray
    params: dict = field(default_factory=dict)


# -- math ----------------------------------------------------------------------

def softmax(scores: np.ndarray, axis: int = 0) -> np.ndarray:
    s = scores - np.max(scores, axis=axis, keepdims=True)
    e = np.exp(s)
    return e / np.sum(e, axis=axis, keepdims=True)


def _init_params(spec: ClassifierSpec, d: int, n_classes: int) -> dict:
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "softmax_regression":
        return {
            "W": spec.init_scale * rng.standard_normal((n_classes, d)),
            "b": np.zeros(n_classes),
        }
    h = spec.hidden_units
    # Glorot-style scale for the tanh layer
    return {
        "W1": rng.standard_normal((h, d)) * np.sqrt(1.0 / d),
        "b1": np.zeros(h),
        "W2": rng.standard_normal((n_classes, h)) * np.sqrt(1.0 / h),
        "b2": np.zeros(n_classes),
    }


def _scores(kind: str, params: dict, Xs: np.ndarray):
    """Raw class scores ``(N, P)`` plus the hidden activations for the MLP."""
    if kind == "softmax_regression":
        return params["W"] @ Xs.T + params["b"][:, np.newaxis], None
    H = np.tanh(params["W1"] @ Xs.T + params["b1"][:, np.newaxis])
    return params["W2"] @ H + params["b2"][:, np.newaxis], H


def loss_and_grad(kind: str, params: dict, Xs: np.ndarray, Y: np.ndarray, l2: float):
    """Mean cross-entropy + ``l2/2 * ||W||^2`` and its gradient.

    ``Y`` is the ``(N, P)`` one-hot label matrix. Biases are not penalized.
    """
    P = Xs.shape[0]
    S, H = _scores(kind, params, Xs)
    S = S - S.max(axis=0, keepdims=True)
    logZ = np.log(np.sum(np.exp(S), axis=0))
    logp = S - logZ
    loss = -np.sum(Y * logp) / P
    G = (np.exp(logp) - Y) / P
    grads = {}
    if kind == "softmax_regression":
        W = params["W"]
        loss += 0.5 * l2 * np.sum(W * W)
        grads["W"] = G @ Xs + l2 * W
        grads["b"] = G.sum(axis=1)
    else:
        W1, W2 = params["W1"], params["W2"]
        loss += 0.5 * l2 * (np.sum(W1 * W1) + np.sum(W2 * W2))
        grads["W2"] = G @ H.T + l2 * W2
        grads["b2"] = G.sum(axis=1)
        dA = (W2.T @ G) * (1.0 - H * H)
        grads["W1"] = dA @ Xs + l2 * W1
        grads["b1"] = dA.sum(axis=1)
    return loss, grads


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    Y = np.zeros((n_classes, y.size))
    Y[y, np.arange(y.size)] = 1.0
    return Y


# -- public API ---------------------------------------------------------------

def _check_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"features must be 2D (samples, features), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeatures("feature matrix contains NaN or Inf")
    return X


def _standardizer(X: np.ndarray):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def fit(spec: ClassifierSpec, X, y, n_classes: int | None = None) -> Model:
    """Train a classifier; deterministic given ``spec.seed``."""
    X = _check_features(X)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ShapeMismatch(f"{X.shape[0]} feature rows but {y.size} labels")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    present = np.bincount(y, minlength=n_classes)
    if y.min() < 0 or present.size > n_classes or np.any(present == 0):
        raise MissingClass(f"every class in [0, {n_classes}) needs a sample; counts {present.tolist()}")

    mean, scale = _standardizer(X)
    model = Model(spec, n_classes, X.shape[1], mean, scale)
    Xs = (X - mean) / scale
    if spec.kind == "knn":
        model.params = {"X": Xs, "y": y.astype(np.float64)}
        return model

    params = _init_params(spec, X.shape[1], n_classes)
    Y = one_hot(y, n_classes)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v) for k, v in params.items()}
    # overflow shows up as a non-finite loss, reported as DivergedLoss
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, spec.epochs + 1):
            loss, grads = loss_and_grad(spec.kind, params, Xs, Y, spec.l2)
            if not np.isfinite(loss):
                raise DivergedLoss(f"loss became non-finite at epoch {t}")
            for k in params:
                m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                mhat = m[k] / (1 - beta1**t)
                vhat = v[k] / (1 - beta2**t)
                params[k] = params[k] - spec.learning_rate * mhat / (np.sqrt(vhat) + eps)
    model.params = params
    return model


def _knn_proba(model: Model, Xs: np.ndarray) -> np.ndarray:
    Xt = model.params["X"]
    yt = model.params["y"].astype(np.int64)
    k = min(model.spec.k_neighbors, Xt.shape[0])
    d2 = (
        np.sum(Xs * Xs, axis=1)[:, np.newaxis]
        - 2.0 * Xs @ Xt.T
        + np.sum(Xt * Xt, axis=1)[np.newaxis, :]
    )
    d2 = np.maximum(d2, 0.0)
    # equal-distance ties resolve by training order
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
    dist = np.sqrt(np.take_along_axis(d2, nn, axis=1))
    exact = dist <= 1e-12
    w = np.where(exact.any(axis=1, keepdims=True), exact.astype(np.float64), 1.0 / dist.clip(1e-300))
    out = np.zeros((model.n_classes, Xs.shape[0]))
    cols = np.repeat(np.arange(Xs.shape[0]), k)
    np.add.at(out, (yt[nn].ravel(), cols), w.ravel())
    return out / out.sum(axis=0, keepdims=True)


def predict(model: Model, X) -> np.ndarray:
    """Normalized logits, shape ``(N, P)``; every column sums to one."""
    X = _check_features(X)
    if X.shape[1] != model.n_features:
        raise ShapeMismatch(f"model expects {model.n_features} features, got {X.shape[1]}")
    Xs = (X - model.mean) / model.scale
    if model.spec.kind == "knn":
        return _knn_proba(model, Xs)
    S, _ = _scores(model.spec.kind, model.params, Xs)
    return softmax(S, axis=0)


def gradient_check(spec: ClassifierSpec, X, y, n_classes: int | None = None,
                   step: float = 1e-5, params: dict | None = None) -> float:
    """Max relative error between the analytic gradient and central differences.

    Parameters are the seeded initialization unless given explicitly; the
    relative error uses ``max(|analytic|, |numeric|, 1e-6)`` as denominator.
    """
    if spec.kind == "knn":
        raise ConfigError("knn has no gradient")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    Y = one_hot(y, n_classes)
    if params is None:
        params = _init_params(spec, X.shape[1], n_classes)
    params = {k: v.copy() for k, v in params.items()}
    _, analytic = loss_and_grad(spec.kind, params, X, Y, spec.l2)
    worst = 0.0
    for name, p in params.items():
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + step
            lp, _ = loss_and_grad(spec.kind, params, X, Y, spec.l2)
            p[idx] = orig - step
            lm, _ = loss_and_grad(spec.kind, params, X, Y, spec.l2)
            p[idx] = orig
            num = (lp - lm) / (2 * step)
            a = analytic[name][idx]
            rel = abs(a - num) / max(abs(a), abs(num), 1e-6)
            worst = max(worst, rel)
    return worst


# -- serialization ------------------------------------------------------------

_MAGIC = b"DDFMODEL1\n"


def dumps_model(model: Model) -> bytes:
    """JSON header line followed by a raw little-endian float64 block."""
    arrays = [("mean", model.mean), ("scale", model.scale)]
    arrays += sorted(model.params.items())
    header = {
        "spec": model.spec.to_dict(),
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "seed": model.spec.seed,
        "arrays": [{"name": k, "shape": list(np.shape(a))} for k, a in arrays],
    }
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(json.dumps(header).encode() + b"\n")
    for _, a in arrays:
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def loads_model(data: bytes) -> Model:
    if not data.startswith(_MAGIC):
        raise DataError("not a serialized model")
    rest = data[len(_MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl])
    block = memoryview(rest)[nl + 1:]
    offset = 0
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        a = np.frombuffer(block, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays[entry["name"]] = a.astype(np.float64)
        offset += 8 * count
    if offset != len(block):
        raise DataError("trailing bytes after model parameters")
    mean = arrays.pop("mean")
    scale = arrays.pop("scale")
    return Model(ClassifierSpec.from_dict(header["spec"]), header["n_classes"],
                 header["n_features"], mean, scale, arrays)


def save_model(path, model: Model) -> None:
    try:
        Path(path).write_bytes(dumps_model(model))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_model(path) -> Model:
    try:
        return loads_model(Path(path).read_bytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
