"""Experiment orchestration: synthetic data, dataset directories, threshold
sweeps, deployment gating and the CSV tables written by the CLI."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import classifiers as clf
from .errors import ConfigError, DataError, InvalidSpec, IoFailure
from .protocol import SplitPlan, make_temporal_splits, summarize
from .signal_core import (
    NoiseSpec,
    Recording,
    add_noise,
    decimate,
    read_recording,
    segment,
    write_recording,
)
from .ssl import METHODS, SslConfig, SslData, StepReport, run_ssl
from .tfr import TfrConfig, tfr_features

FAMILIES = ("up_chirp", "down_chirp", "am_tone", "burst")

DEFAULT_CLASSES = (
    {"family": "up_chirp", "f_start": 150.0, "f_end": 450.0},
    {"family": "down_chirp", "f_start": 450.0, "f_end": 150.0},
    {"family": "am_tone", "carrier": 300.0, "mod_freq": 30.0, "depth": 0.8},
    {"family": "burst", "width": 0.2},
)


# -- synthetic data -----------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    """Desk-scale stand-in for a multi-class vibration dataset.

    Every class is a waveform family with jittered parameters. Frequencies
    drift linearly over each class recording by ``drift`` (relative), which
    mimics a slowly changing operating condition and makes the temporal split
    protocol meaningful.
    """

    class_count: int = 4
    segments_per_class: int = 400
    segment_len_s: float = 0.1
    sample_rate_hz: float = 2560.0
    snr_db: float | None = None
    channels: int = 1
    classes: tuple = DEFAULT_CLASSES
    jitter: float = 0.15
    drift: float = 0.4
    seed: int = 0

    def __post_init__(self):
        classes = tuple(dict(c) for c in self.classes)
        object.__setattr__(self, "classes", classes)
        if self.class_count < 2:
            raise InvalidSpec("class_count must be >= 2")
        if len(classes) != self.class_count:
            raise InvalidSpec(f"{len(classes)} class definitions for class_count={self.class_count}")
        keys = [json.dumps(c, sort_keys=True) for c in classes]
        if len(set(keys)) != len(keys):
            raise InvalidSpec("class definitions must be distinct")
        for c in classes:
            if c.get("family") not in FAMILIES:
                raise InvalidSpec(f"unknown waveform family {c.get('family')!r}")
        if self.segments_per_class < 1 or self.channels < 1:
            raise InvalidSpec("segments_per_class and channels must be >= 1")
        n = self.segment_len_s * self.sample_rate_hz
        if abs(n - round(n)) > 1e-9 or round(n) < 2:
            raise InvalidSpec(f"segment_len_s * sample_rate_hz = {n} must be a whole number >= 2")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise InvalidSpec("snr_db must be finite or null")
        if not 0 <= self.jitter < 1 or self.drift < 0:
            raise InvalidSpec("need 0 <= jitter < 1 and drift >= 0")

    @property
    def samples_per_segment(self) -> int:
        return int(round(self.segment_len_s * self.sample_rate_hz))

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidSpec(f"unknown synth fields: {sorted(unknown)}")
        d = dict(d)
        if "classes" in d:
            d["classes"] = tuple(d["classes"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = [dict(c) for c in self.classes]
        return d


@dataclass
class SegmentDataset:
    """Segments ``(P, Q, n)`` in class-major temporal order."""

    segments: np.ndarray
    labels: np.ndarray
    sample_rate_hz: float
    segment_len_s: float
    class_names: list = field(default_factory=list)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self.labels))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def recordings(self) -> list:
        """One concatenated recording per class."""
        out = []
        for n in range(self.n_classes):
            segs = self.segments[self.labels == n]
            P, Q, m = segs.shape
            out.append(Recording(segs.transpose(1, 0, 2).reshape(Q, P * m), self.sample_rate_hz))
        return out


def _waveform(cls: dict, t: np.ndarray, speed: float, rng: np.random.Generator,
              jitter: float) -> np.ndarray:
    def jit():
        return 1.0 + jitter * rng.uniform(-1, 1)

    phase0 = rng.uniform(0, 2 * np.pi)
    L = t[-1] + (t[1] - t[0])
    fam = cls["family"]
    if fam in ("up_chirp", "down_chirp"):
        f0 = cls.get("f_start", 150.0) * speed * jit()
        f1 = cls.get("f_end", 450.0) * speed * jit()
        k = (f1 - f0) / L
        return np.cos(2 * np.pi * (f0 * t + 0.5 * k * t * t) + phase0)
    if fam == "am_tone":
        fc = cls.get("carrier", 300.0) * speed * jit()
        fm = cls.get("mod_freq", 30.0) * jit()
        depth = cls.get("depth", 0.8)
        env = 1.0 + depth * np.cos(2 * np.pi * fm * t + rng.uniform(0, 2 * np.pi))
        return env * np.cos(2 * np.pi * fc * t + phase0)
    # broadband burst: Gaussian-windowed white noise at a random position
    width = cls.get("width", 0.2) * L * jit()
    centre = rng.uniform(0.2, 0.8) * L
    window = np.exp(-0.5 * ((t - centre) / width) ** 2)
    return window * rng.standard_normal(t.size)


def synth_dataset(spec: SynthSpec) -> SegmentDataset:
    """Deterministic synthetic segments; optional per-segment white noise at
    ``spec.snr_db``."""
    n = spec.samples_per_segment
    t = np.arange(n) / spec.sample_rate_hz
    P = spec.segments_per_class
    root = np.random.SeedSequence(spec.seed)
    class_seqs = root.spawn(spec.class_count)
    segs = np.empty((spec.class_count * P, spec.channels, n))
    labels = np.repeat(np.arange(spec.class_count), P)
    for ci, cls in enumerate(spec.classes):
        seg_seqs = class_seqs[ci].spawn(P)
        for p in range(P):
            rng = np.random.default_rng(seg_seqs[p])
            speed = 1.0 + spec.drift * p / max(P - 1, 1)
            x = np.stack([_waveform(cls, t, speed, rng, spec.jitter) for _ in range(spec.channels)])
            if spec.snr_db is not None:
                noise_seed = int(rng.integers(2**63))
                x = add_noise(Recording(x, spec.sample_rate_hz), NoiseSpec(spec.snr_db, noise_seed)).samples
            segs[ci * P + p] = x
    names = [c.get("name", c["family"]) for c in spec.classes]
    return SegmentDataset(segs, labels, spec.sample_rate_hz, spec.segment_len_s, names)


def noisy_copy(ds: SegmentDataset, snr_db: float, seed: int = 0) -> SegmentDataset:
    """Corrupt every segment independently at ``snr_db``."""
    seqs = np.random.SeedSequence(seed).spawn(len(ds.labels))
    out = np.empty_like(ds.segments)
    for i, seg in enumerate(ds.segments):
        s = int(seqs[i].generate_state(1, np.uint64)[0])
        out[i] = add_noise(Recording(seg, ds.sample_rate_hz), NoiseSpec(snr_db, s)).samples
    return SegmentDataset(out, ds.labels.copy(), ds.sample_rate_hz, ds.segment_len_s,
                          list(ds.class_names))


# -- dataset directories ----------------------------------------------------------

MANIFEST = "manifest.json"


def write_dataset(directory, ds: SegmentDataset, fmt: str = "csv") -> None:
    """One recording per class (CSV or raw float32) plus ``manifest.json``."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        entries = []
        for n, rec in enumerate(ds.recordings()):
            fname = f"class_{n}.{'csv' if fmt == 'csv' else 'bin'}"
            write_recording(d / fname, rec)
            entries.append({"name": ds.class_names[n], "file": fname})
        manifest = {"segment_len_s": ds.segment_len_s, "sample_rate_hz": ds.sample_rate_hz,
                    "classes": entries}
        (d / MANIFEST).write_text(json.dumps(manifest, indent=2))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_dataset(directory, max_segments_per_class: int | None = None,
                 target_rate_hz: float | None = None) -> SegmentDataset:
    d = Path(directory)
    try:
        manifest = json.loads((d / MANIFEST).read_text())
    except FileNotFoundError as exc:
        raise IoFailure(f"no {MANIFEST} in {d}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest: {exc}") from exc
    L = float(manifest["segment_len_s"])
    segs, labels, names, fs = [], [], [], None
    for n, entry in enumerate(manifest["classes"]):
        rec = read_recording(d / entry["file"])
        if target_rate_hz is not None:
            rec = decimate(rec, target_rate_hz)
        s = segment(rec, L).segments
        if max_segments_per_class is not None:
            s = s[:max_segments_per_class]
        if fs is not None and rec.sample_rate_hz != fs:
            raise DataError("all class recordings must share one sample rate")
        fs = rec.sample_rate_hz
        segs.append(s)
        labels.append(np.full(len(s), n))
        names.append(entry.get("name", f"class_{n}"))
    if not segs:
        raise DataError("manifest lists no classes")
    shapes = {s.shape[1:] for s in segs}
    if len(shapes) != 1:
        raise DataError(f"class recordings disagree on channel count: {shapes}")
    return SegmentDataset(np.concatenate(segs), np.concatenate(labels), fs, L, names)


# -- experiment config -------------------------------------------------------------

@dataclass(frozen=True)
class Experiment:
    ssl: SslConfig
    tfr: TfrConfig
    synth: SynthSpec | None = None
    data_dir: str | None = None
    snr_db: float | None = None
    noise_seed: int = 0
    max_segments_per_class: int | None = None
    target_rate_hz: float | None = None
    min_gain: float = 0.01

    @property
    def noise_label(self) -> str:
        snr = self.snr_db
        if snr is None and self.synth is not None:
            snr = self.synth.snr_db
        return "clean" if snr is None else f"{snr:g}dB"


DEFAULT_TIME_CLASSIFIER = {"kind": "mlp", "hidden_units": 32, "epochs": 150,
                           "learning_rate": 0.01, "l2": 1e-3}
DEFAULT_TF_CLASSIFIER = {"kind": "softmax_regression", "epochs": 150,
                         "learning_rate": 0.01, "l2": 1e-2}


def experiment_from_dict(cfg: dict, base_dir: Path | None = None) -> Experiment:
    """Parse an experiment JSON document (schema in the README)."""
    known = {"synth", "data_dir", "snr_db", "noise_seed", "max_segments_per_class",
             "target_rate_hz", "tfr", "ssl", "time_classifier", "tf_classifier", "min_gain"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
    try:
        ssl_d = dict(cfg.get("ssl", {}))
        tc = clf.ClassifierSpec.from_dict(cfg.get("time_classifier", DEFAULT_TIME_CLASSIFIER))
        fc = clf.ClassifierSpec.from_dict(cfg.get("tf_classifier", DEFAULT_TF_CLASSIFIER))
        ssl = SslConfig(
            xi=float(ssl_d.pop("xi", 0.5)),
            steps=int(ssl_d.pop("steps", 7)),
            repetitions=int(ssl_d.pop("repetitions", 3)),
            seed=int(ssl_d.pop("seed", 0)),
            time_classifier=tc,
            tf_classifier=fc,
            fusion_fit=ssl_d.pop("fusion_fit", "pool"),
            fusion_folds=int(ssl_d.pop("fusion_folds", 0)),
        )
        if ssl_d:
            raise ConfigError(f"unknown ssl fields: {sorted(ssl_d)}")
        tfr = TfrConfig.from_dict(cfg.get("tfr", {"downsample_factor": 0.125}))
        synth = SynthSpec.from_dict(cfg["synth"]) if "synth" in cfg else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    data_dir = cfg.get("data_dir")
    if (synth is None) == (data_dir is None):
        raise ConfigError("exactly one of 'synth' and 'data_dir' is required")
    if data_dir is not None and base_dir is not None and not Path(data_dir).is_absolute():
        data_dir = str(base_dir / data_dir)
    min_gain = float(cfg.get("min_gain", 0.01))
    if min_gain < 0:
        raise ConfigError("min_gain must be >= 0")
    return Experiment(ssl, tfr, synth, data_dir, cfg.get("snr_db"), int(cfg.get("noise_seed", 0)),
                      cfg.get("max_segments_per_class"), cfg.get("target_rate_hz"), min_gain)


def load_experiment(path) -> Experiment:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return experiment_from_dict(cfg, path.parent)


def build_dataset(exp: Experiment) -> SegmentDataset:
    if exp.synth is not None:
        ds = synth_dataset(exp.synth)
    else:
        ds = load_dataset(exp.data_dir, exp.max_segments_per_class, exp.target_rate_hz)
    if exp.snr_db is not None:
        ds = noisy_copy(ds, exp.snr_db, exp.noise_seed)
    return ds


def prepare(exp: Experiment):
    """Segments -> both feature views and the split plan."""
    ds = build_dataset(exp)
    X_time = ds.segments.reshape(len(ds.labels), -1)
    X_tf = tfr_features(ds.segments, exp.tfr, ds.sample_rate_hz)
    data = SslData(X_time, X_tf, ds.labels.astype(np.int64), ds.n_classes)
    return data, make_temporal_splits(ds.ids, ds.labels)


# -- results tables ---------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    method: str
    noise: str
    xi: float
    step: int
    train_pct: int
    metric: str
    mean: float
    std: float
    ci95_low: float
    ci95_high: float
    n: int
    selected: bool = False


RESULT_COLUMNS = [f for f in ResultRow.__dataclass_fields__]
STEP_COLUMNS = ["repetition", "step", "pool_labeled", "pool_pseudo", "accepted",
                "acc_time", "acc_tf", "acc_fused"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _opt_float(s: str):
    return None if s == "" else float(s)


def results_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def results_from_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != RESULT_COLUMNS:
        raise DataError(f"unexpected results header {reader.fieldnames}")
    out = []
    for r in reader:
        out.append(ResultRow(r["method"], r["noise"], float(r["xi"]), int(r["step"]),
                             int(r["train_pct"]), r["metric"], float(r["mean"]), float(r["std"]),
                             float(r["ci95_low"]), float(r["ci95_high"]), int(r["n"]),
                             r["selected"] == "1"))
    return out


def steps_to_csv(reports, validation: bool = False) -> str:
    """StepReport stream; ``validation=True`` writes validation accuracies."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEP_COLUMNS)
    for r in reports:
        accs = (r.val_time, r.val_tf, r.val_fused) if validation else (r.acc_time, r.acc_tf, r.acc_fused)
        w.writerow([_fmt(v) for v in (r.repetition, r.step, r.pool_labeled, r.pool_pseudo,
                                      r.accepted, *accs)])
    return buf.getvalue()


def steps_from_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != STEP_COLUMNS:
        raise DataError(f"unexpected step-report header {reader.fieldnames}")
    return [StepReport(int(r["repetition"]), int(r["step"]), int(r["pool_labeled"]),
                       int(r["pool_pseudo"]), int(r["accepted"]), float(r["acc_time"]),
                       _opt_float(r["acc_tf"]), float(r["acc_fused"]))
            for r in reader]


def write_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def aggregate_steps(reports, method: str, noise: str, xi: float) -> list:
    """Per-step mean/std/CI over repetitions of every accuracy column."""
    by_step = {}
    for r in reports:
        by_step.setdefault(r.step, []).append(r)
    rows = []
    for step in sorted(by_step):
        group = by_step[step]
        for metric in ("acc_time", "acc_tf", "acc_fused"):
            vals = [getattr(r, metric) for r in group]
            if all(v is None for v in vals):
                continue
            s = summarize(vals)
            rows.append(ResultRow(method, noise, xi, step, 10 * step, metric, s["mean"], s["std"],
                                  s["ci95_low"], s["ci95_high"], s["n"]))
    return rows


# -- sweep / gate -------------------------------------------------------------------

DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(10))


def parse_grid(text: str) -> tuple:
    """``start:stop:step`` (inclusive stop) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError("grid step must be positive")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + i * step, 10) for i in range(count))
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


def select_xi(rows) -> float:
    """Threshold with the highest mean; ties go to the smaller threshold."""
    best = max(rows, key=lambda r: (r.mean, -r.xi))
    return best.xi


def sweep_threshold(grid, cfg: SslConfig, data: SslData, splits: SplitPlan,
                    noise: str = "clean") -> list:
    """Final-step fused validation accuracy (mean ± std over repetitions) per
    threshold, with the best row marked ``selected``."""
    grid = tuple(grid)
    if not grid:
        raise ConfigError("threshold grid is empty")
    rows = []
    for xi in grid:
        reps = run_ssl(cfg.with_xi(xi), data, splits, "ddf")
        finals = [r[-1].val_fused for r in reps]
        s = summarize(finals)
        rows.append(ResultRow("ddf", noise, float(xi), cfg.steps, 10 * cfg.steps, "val_fused",
                              s["mean"], s["std"], s["ci95_low"], s["ci95_high"], s["n"]))
    best = select_xi(rows)
    return [ResultRow(**{**asdict(r), "selected": r.xi == best}) for r in rows]


def deployment_gate(original_acc: float, updated_acc: float, min_gain: float = 0.01) -> str:
    """``"replace"`` iff the updated edge model gains at least ``min_gain``."""
    for v in (original_acc, updated_acc):
        if not 0 <= v <= 1:
            raise DataError(f"accuracy {v} outside [0, 1]")
    if min_gain < 0:
        raise ConfigError("min_gain must be >= 0")
    return "replace" if updated_acc - original_acc >= min_gain else "keep"


METHOD_CHOICES = METHODS
