"""Compact kernel distribution (CKD) time-frequency representations.

Discretization
--------------
The instantaneous autocorrelation uses integer shifts,
``K[n, m] = z[n+m] * conj(z[n-m])`` for ``|m| <= (len-1)//2`` (effective lag
``2m``), with zeros outside the segment. The Doppler-lag kernel is applied to
the ambiguity function ``A = FFT_n K`` on grids normalized to ``[-1, 1]``
(Doppler: ``2 * fftfreq``; lag: ``2m / len``), so the cutoffs ``D`` and ``E``
are fractions of the full axes. Frequency bin ``k`` corresponds to
``k * fs / (2 * len)``, covering ``[0, fs/2)``.

Values are scaled so that each time row integrates (over frequency) to the
smoothed instantaneous power, hence ``sum(tfr) * dt * df`` equals the
analytic-signal energy ``sum(|z|^2) / fs`` whenever the kernel has unit gain
at the origin. This is one defensible discretization; numbers will differ
from toolboxes that use half-integer lags or other normalizations.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateLength, FactorTooSmall, InvalidParams


@dataclass(frozen=True)
class CkdParams:
    c: float = 1.0
    d_cutoff: float = 0.1
    e_cutoff: float = 0.1

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidParams(f"kernel shape c must be > 0, got {self.c}")
        for name in ("d_cutoff", "e_cutoff"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise InvalidParams(f"{name} must lie in (0, 1], got {v}")


@dataclass(frozen=True)
class TfrConfig:
    downsample_factor: float = 1.0
    ckd: CkdParams = field(default_factory=CkdParams)

    def __post_init__(self):
        if not 0 < self.downsample_factor <= 1:
            raise InvalidParams(f"downsample factor must lie in (0, 1], got {self.downsample_factor}")

    def output_size(self, num_samples: int) -> int:
        return int(round(self.downsample_factor * num_samples))

    @classmethod
    def from_dict(cls, d: dict) -> "TfrConfig":
        ckd = CkdParams(
            c=float(d.get("c", 1.0)),
            d_cutoff=float(d.get("d_cutoff", 0.1)),
            e_cutoff=float(d.get("e_cutoff", 0.1)),
        )
        return cls(float(d.get("downsample_factor", 1.0)), ckd)

    def to_dict(self) -> dict:
        return {
            "downsample_factor": self.downsample_factor,
            "c": self.ckd.c,
            "d_cutoff": self.ckd.d_cutoff,
            "e_cutoff": self.ckd.e_cutoff,
        }


@dataclass(frozen=True)
class Tfr:
    """values has shape ``(Q, time_bins, freq_bins)``."""

    values: np.ndarray
    time_step_s: float
    freq_step_hz: float

    @property
    def shape(self):
        return self.values.shape


def analytic_signal(seg: np.ndarray) -> np.ndarray:
    """Analytic associate along the last axis via the FFT.

    Negative-frequency bins are zeroed, strictly positive bins doubled, DC
    (and Nyquist for even lengths) kept as is.
    """
    x = np.asarray(seg, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise DegenerateLength(f"need at least 2 samples, got {n}")
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[1 : n // 2] = 2.0
        h[n // 2] = 1.0
    else:
        h[1 : (n + 1) // 2] = 2.0
    z = np.fft.ifft(np.fft.fft(x, axis=-1) * h, axis=-1)
    # real part is the input by construction; pin it to remove round-off
    return x + 1j * z.imag


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


@lru_cache(maxsize=32)
def _lag_indices(n: int, n_time: int):
    mmax = (n - 1) // 2
    m = np.arange(-mmax, mmax + 1)
    t = np.arange(n_time)[:, np.newaxis]
    i1 = t + m
    i2 = t - m
    valid = (i1 >= 0) & (i1 < n) & (i2 >= 0) & (i2 < n)
    cols = m % n
    return np.where(valid, i1, 0), np.where(valid, i2, 0), valid, cols


def instantaneous_autocorrelation(z: np.ndarray, n_time: int | None = None) -> np.ndarray:
    """``K[t, m]`` with rows = time (zero-padded to ``n_time``) and columns =
    lag in FFT order, length ``len(z)``."""
    z = np.asarray(z, dtype=np.complex128)
    n = z.shape[-1]
    n_time = n if n_time is None else n_time
    i1, i2, valid, cols = _lag_indices(n, n_time)
    K = np.zeros((n_time, n), dtype=np.complex128)
    K[:, cols] = np.where(valid, z[i1] * np.conj(z[i2]), 0)
    return K


def ambiguity_function(z: np.ndarray, n_time: int | None = None) -> np.ndarray:
    """Doppler-lag ambiguity function ``A[nu, m]`` of a single-channel analytic
    signal; both axes in FFT order, ``A[0, 0] = sum(|z|^2)``."""
    return np.fft.fft(instantaneous_autocorrelation(z, n_time), axis=0)


def doppler_grid(n_time: int) -> np.ndarray:
    return 2.0 * np.fft.fftfreq(n_time)


def lag_grid(n: int) -> np.ndarray:
    mmax = (n - 1) // 2
    m = np.zeros(n)
    pos = np.arange(1, mmax + 1)
    m[pos] = pos
    m[n - pos] = -pos
    return 2.0 * m / n


def _compact_window(grid: np.ndarray, c: float, cutoff: float) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    out = np.zeros_like(g)
    inside = np.abs(g) < cutoff
    gi = g[inside]
    out[inside] = np.exp(c + c * cutoff**2 / (gi**2 - cutoff**2))
    return out


def ckd_kernel(params: CkdParams, doppler, lag):
    """Separable compact-support kernels ``(G1(doppler), G2(lag))``.

    Both equal 1 at the origin and are exactly zero at and beyond the cutoffs.
    """
    return (
        _compact_window(doppler, params.c, params.d_cutoff),
        _compact_window(lag, params.c, params.e_cutoff),
    )


@lru_cache(maxsize=32)
def _kernel_vectors(params: CkdParams, n_time: int, n: int):
    return ckd_kernel(params, doppler_grid(n_time), lag_grid(n))


def smoothed_tfd(z: np.ndarray, params: CkdParams | None, sample_rate_hz: float = 1.0,
                 pad: bool = True) -> np.ndarray:
    """Complex-valued smoothed TFD of one analytic channel, shape ``(n, n)``.

    ``params=None`` applies no smoothing (Wigner-Ville). The imaginary part is
    round-off only; callers normally want :func:`compute_ckd_tfr`.
    """
    n = z.shape[-1]
    n_time = _next_pow2(n) if pad else n
    A = ambiguity_function(z, n_time)
    if params is not None:
        g1, g2 = _kernel_vectors(params, n_time, n)
        A *= g1[:, np.newaxis]
        A *= g2[np.newaxis, :]
    K = np.fft.ifft(A, axis=0)[:n]
    return np.fft.fft(K, axis=1) * (2.0 / sample_rate_hz)


def downsample_tfr(tfr: Tfr, factor: float) -> Tfr:
    """Block-average each channel to ``M x M`` with ``M = round(factor * rows)``.

    Block edges are ``floor(i * rows / M)``, so blocks differ in size by at
    most one bin when ``M`` does not divide the row count.
    """
    _, nt, nf = tfr.values.shape
    M = int(round(factor * nt))
    if M < 2:
        raise FactorTooSmall(f"factor {factor} leaves {M} bins (< 2)")
    if M == nt and M == nf:
        return tfr
    et = (np.arange(M) * nt) // M
    ef = (np.arange(M) * nf) // M
    ct = np.diff(np.append(et, nt))
    cf = np.diff(np.append(ef, nf))
    summed = np.add.reduceat(np.add.reduceat(tfr.values, et, axis=1), ef, axis=2)
    values = summed / (ct[:, np.newaxis] * cf[np.newaxis, :])
    return Tfr(values, tfr.time_step_s * nt / M, tfr.freq_step_hz * nf / M)


def _transform(seg, params, cfg_factor, sample_rate_hz) -> Tfr:
    x = np.atleast_2d(np.asarray(seg, dtype=np.float64))
    n = x.shape[-1]
    z = analytic_signal(x)
    values = np.stack([smoothed_tfd(zq, params, sample_rate_hz).real for zq in z])
    tfr = Tfr(values, 1.0 / sample_rate_hz, sample_rate_hz / (2.0 * n))
    if cfg_factor < 1:
        tfr = downsample_tfr(tfr, cfg_factor)
    return tfr


def compute_ckd_tfr(seg: np.ndarray, cfg: TfrConfig, sample_rate_hz: float = 1.0) -> Tfr:
    """CKD of a ``(Q, n)`` (or 1D) real segment, downsampled when λ < 1."""
    return _transform(seg, cfg.ckd, cfg.downsample_factor, sample_rate_hz)


def wvd(seg: np.ndarray, sample_rate_hz: float = 1.0) -> Tfr:
    """Unsmoothed Wigner-Ville distribution on the same grid as the CKD."""
    return _transform(seg, None, 1.0, sample_rate_hz)


def _worker_count(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("DDF_THREADS", "0") or 0)
    return workers if workers > 0 else (os.cpu_count() or 1)


def tfr_features(segments: np.ndarray, cfg: TfrConfig, sample_rate_hz: float = 1.0,
                 workers: int | None = None) -> np.ndarray:
    """Flattened CKD features for a ``(P, Q, n)`` stack, shape ``(P, Q*M*M)``.

    Segments are processed independently; the result is identical for any
    worker count.
    """
    segments = np.asarray(segments, dtype=np.float64)
    if segments.ndim == 2:
        segments = segments[:, np.newaxis, :]

    def one(seg):
        return compute_ckd_tfr(seg, cfg, sample_rate_hz).values.ravel()

    n_workers = _worker_count(workers)
    if n_workers == 1:
        rows = [one(s) for s in segments]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            rows = list(pool.map(one, segments))
    return np.stack(rows) if rows else np.zeros((0, 0))
