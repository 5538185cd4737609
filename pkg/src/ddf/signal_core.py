"""Time-domain preprocessing: noise corruption, FIR filtering, decimation and
segmentation of multichannel recordings, plus CSV / raw-binary ingest."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import upfirdn

from .errors import (
    DataError,
    EvenTapCount,
    InvalidCutoff,
    IoFailure,
    IrrationalRatio,
    SegmentTooLong,
    SignalTooShort,
    UpsampleRequested,
    ZeroNoiseEnergy,
    ZeroSignalEnergy,
)


@dataclass(frozen=True)
class Recording:
    """Q-channel recording stored as a ``(Q, T*fs)`` float64 array."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise DataError(f"expected a (channels, samples) array, got shape {samples.shape}")
        if not self.sample_rate_hz > 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate_hz


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int = 0


@dataclass(frozen=True)
class FilterSpec:
    taps: np.ndarray
    group_delay_samples: int

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64).ravel()
        if taps.size == 0:
            raise DataError("filter taps must be nonempty")
        object.__setattr__(self, "taps", taps)

    @classmethod
    def symmetric(cls, taps) -> "FilterSpec":
        taps = np.asarray(taps, dtype=np.float64).ravel()
        return cls(taps, (len(taps) - 1) // 2)


@dataclass(frozen=True)
class SegmentSet:
    """P non-overlapping segments, shape ``(P, Q, L*fs)``."""

    segments: np.ndarray
    segment_len_s: float
    sample_rate_hz: float

    def __len__(self):
        return self.segments.shape[0]

    @property
    def samples_per_segment(self) -> int:
        return self.segments.shape[2]

    def concatenate(self) -> np.ndarray:
        """Inverse of :func:`segment` on the retained samples, ``(Q, P*L*fs)``."""
        P, Q, n = self.segments.shape
        return self.segments.transpose(1, 0, 2).reshape(Q, P * n)


def noise_factor(signal_energy, noise_energy, snr_db):
    """Scale applied to the noise so that the mixture has the requested SNR."""
    return 10.0 ** (-snr_db / 20.0) * np.sqrt(signal_energy / noise_energy)


def add_noise(clean: Recording, spec: NoiseSpec) -> Recording:
    """Corrupt every channel with white Gaussian noise at ``spec.snr_db``.

    The scale factor uses the energy of the realized noise draw, so the output
    SNR matches the request up to floating-point error.
    """
    if not np.isfinite(spec.snr_db):
        raise DataError(f"snr_db must be finite, got {spec.snr_db}")
    v = clean.samples
    signal_energy = np.sum(v * v, axis=1)
    if np.any(signal_energy == 0):
        raise ZeroSignalEnergy("cannot set an SNR for a channel with zero energy")
    rng = np.random.default_rng(spec.seed)
    eta = rng.standard_normal(v.shape)
    noise_energy = np.sum(eta * eta, axis=1)
    if np.any(noise_energy == 0):
        raise ZeroNoiseEnergy("noise draw has zero energy")
    alpha = noise_factor(signal_energy, noise_energy, spec.snr_db)
    return Recording(v + alpha[:, np.newaxis] * eta, clean.sample_rate_hz)


def realized_snr_db(clean: np.ndarray, noisy: np.ndarray) -> np.ndarray:
    clean = np.atleast_2d(clean)
    noise = np.atleast_2d(noisy) - clean
    return 10.0 * np.log10(np.sum(clean**2, axis=1) / np.sum(noise**2, axis=1))


def _filter_array(x: np.ndarray, filt: FilterSpec) -> np.ndarray:
    n = x.shape[-1]
    d = filt.group_delay_samples
    out = np.empty_like(x)
    for q in range(x.shape[0]):
        out[q] = np.convolve(x[q], filt.taps)[d : d + n]
    return out


def apply_filter(rec: Recording, filt: FilterSpec) -> Recording:
    """Convolve each channel with ``filt.taps`` and undo the group delay."""
    if rec.num_samples <= len(filt.taps):
        raise SignalTooShort(
            f"recording has {rec.num_samples} samples, filter has {len(filt.taps)} taps"
        )
    return Recording(_filter_array(rec.samples, filt), rec.sample_rate_hz)


def design_lowpass(cutoff_hz: float, num_taps: int, sample_rate_hz: float) -> FilterSpec:
    """Hamming-windowed sinc lowpass with unit DC gain."""
    if not 0 < cutoff_hz < sample_rate_hz / 2:
        raise InvalidCutoff(f"cutoff {cutoff_hz} Hz outside (0, {sample_rate_hz / 2}) Hz")
    if num_taps < 1 or num_taps % 2 == 0:
        raise EvenTapCount(f"num_taps must be a positive odd number, got {num_taps}")
    fc = cutoff_hz / sample_rate_hz
    m = np.arange(num_taps) - (num_taps - 1) / 2
    taps = 2 * fc * np.sinc(2 * fc * m) * np.hamming(num_taps)
    taps /= taps.sum()
    # np.hamming is symmetric only up to round-off; enforce exact mirroring
    taps = 0.5 * (taps + taps[::-1])
    return FilterSpec(taps, (num_taps - 1) // 2)


def resample_ratio(source_hz: float, target_hz: float, max_denominator: int = 1000) -> Fraction:
    ratio = Fraction(target_hz / source_hz).limit_denominator(max_denominator)
    if abs(float(ratio) - target_hz / source_hz) > 1e-9 * target_hz / source_hz:
        raise IrrationalRatio(f"{target_hz}/{source_hz} is not a small rational ratio")
    return ratio


def _resample_poly(x: np.ndarray, up: int, down: int, taps_per_phase: int = 10) -> np.ndarray:
    num_taps = 2 * taps_per_phase * max(up, down) + 1
    # cutoff relative to the upsampled rate; 0.5/max(up, down) is the lower Nyquist
    filt = design_lowpass(0.5 / max(up, down), num_taps, 1.0)
    h = filt.taps * up
    d = filt.group_delay_samples
    pad = (-d) % down
    h = np.concatenate([np.zeros(pad), h])
    offset = (d + pad) // down
    n_out = x.shape[-1] * up // down
    y = upfirdn(h, x, up=up, down=down, axis=-1)
    return y[:, offset : offset + n_out]


def decimate(rec: Recording, target_rate_hz: float, num_taps: int = 101) -> Recording:
    """Anti-alias filter and rationally resample to a lower rate.

    A windowed-sinc prefilter with cutoff at the target Nyquist frequency is
    applied first (delay compensated), followed by polyphase up/down
    resampling.
    """
    fs = rec.sample_rate_hz
    if target_rate_hz > fs:
        raise UpsampleRequested(f"target {target_rate_hz} Hz exceeds source {fs} Hz")
    if target_rate_hz == fs:
        return rec
    ratio = resample_ratio(fs, target_rate_hz)
    pre = design_lowpass(target_rate_hz / 2, num_taps, fs)
    filtered = apply_filter(rec, pre).samples
    out = _resample_poly(filtered, ratio.numerator, ratio.denominator)
    return Recording(out, target_rate_hz)


def segment(rec: Recording, segment_len_s: float) -> SegmentSet:
    """Split into floor(T/L) consecutive segments; the trailing remainder is dropped."""
    n = segment_len_s * rec.sample_rate_hz
    n_int = int(round(n))
    if abs(n - n_int) > 1e-9 * max(1.0, n) or n_int < 2:
        raise DataError(f"L*fs = {n} must be a whole number >= 2")
    P = rec.num_samples // n_int
    if P == 0:
        raise SegmentTooLong(
            f"segment of {n_int} samples longer than recording of {rec.num_samples}"
        )
    Q = rec.channel_count
    segs = rec.samples[:, : P * n_int].reshape(Q, P, n_int).transpose(1, 0, 2).copy()
    return SegmentSet(segs, segment_len_s, rec.sample_rate_hz)


# ingest / export -----------------------------------------------------------

def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _read_sidecar(path: Path) -> dict:
    side = _sidecar(path)
    try:
        return json.loads(side.read_text())
    except FileNotFoundError as exc:
        raise IoFailure(f"missing sidecar {side}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed sidecar {side}: {exc}") from exc


def read_csv_recording(path) -> Recording:
    path = Path(path)
    meta = _read_sidecar(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    except (ValueError, StopIteration) as exc:
        raise DataError(f"malformed CSV {path}: {exc}") from exc
    expected = [f"ch{q}" for q in range(len(header))]
    if header != expected:
        raise DataError(f"CSV header must be {expected}, got {header}")
    data = np.array(rows, dtype=np.float64).reshape(-1, len(header)).T
    return Recording(data, meta["sample_rate_hz"])


def write_csv_recording(path, rec: Recording) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"ch{q}" for q in range(rec.channel_count)])
        for row in rec.samples.T:
            writer.writerow([repr(float(v)) for v in row])
    _sidecar(path).write_text(
        json.dumps({"sample_rate_hz": rec.sample_rate_hz, "channels": rec.channel_count})
    )


def read_raw_recording(path) -> Recording:
    """Little-endian float32, channel-interleaved, with a JSON sidecar."""
    path = Path(path)
    meta = _read_sidecar(path)
    Q = int(meta["channels"])
    try:
        flat = np.fromfile(path, dtype="<f4")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if flat.size % Q:
        raise DataError(f"{flat.size} values is not a multiple of {Q} channels")
    return Recording(flat.reshape(-1, Q).T.astype(np.float64), meta["sample_rate_hz"])


def write_raw_recording(path, rec: Recording) -> None:
    path = Path(path)
    rec.samples.T.astype("<f4").tofile(path)
    _sidecar(path).write_text(
        json.dumps({"sample_rate_hz": rec.sample_rate_hz, "channels": rec.channel_count})
    )


def read_recording(path) -> Recording:
    path = Path(path)
    if path.suffix == ".csv":
        return read_csv_recording(path)
    return read_raw_recording(path)


def write_recording(path, rec: Recording) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        write_csv_recording(path, rec)
    else:
        write_raw_recording(path, rec)
