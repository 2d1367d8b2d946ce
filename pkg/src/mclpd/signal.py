"""EEG data containers, preprocessing and real FFT helpers.

FFT convention used throughout the package: the forward transform is
unnormalized and the inverse divides by the number of samples ``T``
(numpy's default).  Under this convention Parseval reads
``sum(x**2) == sum(|X_full|**2) / T`` over the full two-sided spectrum.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps

DEFAULT_FS = 500.0
DEFAULT_TAPS = 501
ZSCORE_EPS = 1e-12


@dataclass(frozen=True)
class EpochSet:
    """A batch of fixed-length multi-channel EEG epochs.

    ``data`` has shape ``(n_epochs, n_channels, n_samples)``.  ``labels`` is
    optional and restricted to ``{0, 1}`` (control / PD).
    """

    data: np.ndarray
    fs: float
    subject_ids: np.ndarray
    channel_names: tuple = ()
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"data must be 3-D (epochs, channels, samples), got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        n_epochs, n_channels, _ = data.shape
        subject_ids = np.asarray(self.subject_ids, dtype=np.int64).reshape(-1)
        if subject_ids.shape[0] != n_epochs:
            raise ValueError("subject_ids length must equal n_epochs")
        names = tuple(str(c) for c in self.channel_names)
        if not names:
            names = tuple(f"ch{i}" for i in range(n_channels))
        if len(names) != n_channels:
            raise ValueError("channel_names length must equal n_channels")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != n_epochs:
                raise ValueError("labels length must equal n_epochs")
            if not np.isin(labels, (0, 1)).all():
                raise ValueError("labels must be 0 (control) or 1 (PD)")
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "subject_ids", subject_ids)
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def n_epochs(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    def __len__(self) -> int:
        return self.n_epochs

    def with_data(self, data: np.ndarray) -> "EpochSet":
        return replace(self, data=data)

    def subset(self, index) -> "EpochSet":
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        return EpochSet(self.data[index], self.fs, self.subject_ids[index],
                        self.channel_names, labels)

    @classmethod
    def concatenate(cls, sets: Sequence["EpochSet"]) -> "EpochSet":
        if not sets:
            raise ValueError("nothing to concatenate")
        first = sets[0]
        has_labels = all(s.labels is not None for s in sets)
        return cls(
            np.concatenate([s.data for s in sets]),
            first.fs,
            np.concatenate([s.subject_ids for s in sets]),
            first.channel_names,
            np.concatenate([s.labels for s in sets]) if has_labels else None,
        )


@dataclass(frozen=True)
class Spectrum:
    """One-sided spectrum of real traces, stored as magnitude and phase."""

    magnitude: np.ndarray
    phase: np.ndarray
    bin_hz: float
    n_samples: int = field(default=0)

    def complex(self) -> np.ndarray:
        return self.magnitude * np.exp(1j * self.phase)


def rfft(x: np.ndarray, fs: float = DEFAULT_FS) -> Spectrum:
    """Forward (unnormalized) real FFT along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise ValueError("need at least 2 samples")
    coeffs = np.fft.rfft(x, axis=-1)
    return Spectrum(np.abs(coeffs), np.angle(coeffs), fs / n, n)


def irfft(spec: Spectrum) -> np.ndarray:
    """Inverse of :func:`rfft` (divides by ``T``)."""
    return np.fft.irfft(spec.complex(), n=spec.n_samples, axis=-1)


def rfft_weights(n_samples: int) -> np.ndarray:
    """Multiplicity of each one-sided bin inside the two-sided spectrum."""
    w = np.full(n_samples // 2 + 1, 2.0)
    w[0] = 1.0
    if n_samples % 2 == 0:
        w[-1] = 1.0
    return w


def spectral_energy(spec: Spectrum) -> np.ndarray:
    """Time-domain energy ``sum(x**2)`` computed from the spectrum (Parseval)."""
    w = rfft_weights(spec.n_samples)
    return (w * spec.magnitude**2).sum(axis=-1) / spec.n_samples


def band_bins(n_samples: int, fs: float, lo: float, hi: float) -> np.ndarray:
    """Boolean mask over one-sided bins whose frequency lies in ``[lo, hi)``."""
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / fs)
    return (freqs >= lo) & (freqs < hi)


def design_bandpass(lo: float, hi: float, fs: float = DEFAULT_FS, taps: int = DEFAULT_TAPS) -> np.ndarray:
    if taps % 2 == 0 or taps < 3:
        raise ValueError("taps must be odd and >= 3")
    if not 0 < lo < hi < fs / 2:
        raise ValueError(f"band edges must satisfy 0 < lo < hi < fs/2, got {lo}, {hi} at fs={fs}")
    return sps.firwin(taps, [lo, hi], pass_zero="bandpass", window="hamming", fs=fs)


def fir_filter(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # odd-length symmetric kernel + "same" slicing == group-delay compensation
    x = np.asarray(x, dtype=np.float64)
    kernel = taps.reshape((1,) * (x.ndim - 1) + (-1,))
    return sps.oaconvolve(x, kernel, mode="same", axes=-1)


def bandpass(x, lo: float = 1.0, hi: float = 45.0, taps: int = DEFAULT_TAPS, fs: Optional[float] = None):
    """Zero-phase Hamming-windowed FIR band-pass.

    Accepts an :class:`EpochSet` (uses its ``fs``) or a raw array whose last
    axis is time (``fs`` required).  Returns the same kind of object.
    """
    if isinstance(x, EpochSet):
        h = design_bandpass(lo, hi, x.fs, taps)
        return x.with_data(fir_filter(x.data, h))
    if fs is None:
        raise ValueError("fs is required for array input")
    return fir_filter(x, design_bandpass(lo, hi, fs, taps))


def epoch_split(record: np.ndarray, fs: float, dur: float = 5.0, subject_id: int = 0,
                channel_names: Sequence[str] = (), label: Optional[int] = None) -> EpochSet:
    """Cut a continuous ``(n_channels, n_samples)`` record into non-overlapping epochs.

    The trailing remainder is dropped; a record shorter than one epoch yields
    an empty set.
    """
    if dur <= 0:
        raise ValueError("dur must be positive")
    record = np.asarray(record)
    if record.ndim != 2:
        raise ValueError("record must be (n_channels, n_samples)")
    n_ch, n = record.shape
    size = int(round(fs * dur))
    count = n // size
    data = record[:, : count * size].reshape(n_ch, count, size).transpose(1, 0, 2)
    labels = None if label is None else np.full(count, label)
    return EpochSet(np.ascontiguousarray(data), fs, np.full(count, subject_id),
                    channel_names, labels)


def zscore(x):
    """Per-(epoch, channel) standardization with population std.

    Traces with ``std < 1e-12`` map to all-zero.
    """
    arr = x.data if isinstance(x, EpochSet) else np.asarray(x, dtype=np.float64)
    mu = arr.mean(axis=-1, keepdims=True)
    sd = arr.std(axis=-1, keepdims=True)
    flat = sd < ZSCORE_EPS
    out = np.where(flat, 0.0, (arr - mu) / np.where(flat, 1.0, sd))
    return x.with_data(out) if isinstance(x, EpochSet) else out


def preprocess(x: EpochSet, lo: float = 1.0, hi: float = 45.0, taps: int = DEFAULT_TAPS) -> EpochSet:
    """Band-pass then z-score (re-referencing is done at ingestion)."""
    return zscore(bandpass(x, lo, hi, taps))


# canonical bands; gamma is capped at the 45 Hz low-pass edge
EEG_BANDS = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, 45.0),
}
