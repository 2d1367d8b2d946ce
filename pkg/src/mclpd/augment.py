"""Time- and frequency-domain augmentation operators.

Every operator is a deterministic function of ``(x, params)``; randomness is
confined to :meth:`AugOp.sample`, which draws concrete parameters (noise
operators draw a ``noise_seed`` rather than consuming the caller's stream at
apply time, so a recorded parameter list replays bit-exactly).

Arrays may have any leading shape; the last axis is time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from .signal import DEFAULT_FS, EEG_BANDS


class AugKind(str, Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    TIME_SHIFT = "time_shift"
    AMPLITUDE_SCALE = "amplitude_scale"
    RANDOM_MASK = "random_mask"
    FREQUENCY_SHIFT = "frequency_shift"
    SPECTRAL_SCALE = "spectral_scale"
    BAND_NOISE = "band_noise"


# ---------------------------------------------------------------------------
# operators


def gaussian_noise(x, sigma, rng=None):
    """``x + n`` with ``n ~ N(0, sigma^2)`` i.i.d. per sample."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    rng = np.random.default_rng(rng)
    return x + rng.normal(0.0, sigma, size=x.shape)


def time_shift(x, delta: int):
    """Circular shift: ``x'(t) = x((t - delta) mod L)``."""
    return np.roll(np.asarray(x, dtype=np.float64), int(delta), axis=-1)


def amplitude_scale(x, alpha: float):
    return alpha * np.asarray(x, dtype=np.float64)


def random_mask(x, t_start: int, t_end: int):
    """Zero the inclusive segment ``[t_start, t_end]``."""
    x = np.array(x, dtype=np.float64)
    length = x.shape[-1]
    if not 0 <= t_start <= t_end < length:
        raise ValueError(f"mask [{t_start}, {t_end}] outside [0, {length})")
    x[..., t_start:t_end + 1] = 0.0
    return x


def _phase_sign(n: int) -> np.ndarray:
    # +1 on positive-frequency bins, -1 on their mirrors, 0 on DC / Nyquist
    sign = np.sign(np.fft.fftfreq(n))
    if n % 2 == 0:
        sign[n // 2] = 0.0
    return sign


def frequency_shift(x, delta_phase: float, return_complex: bool = False):
    """Add a constant phase to every positive-frequency bin.

    The negative-frequency mirror receives ``-delta_phase`` so the spectrum
    stays Hermitian and the inverse transform is real.  With
    ``return_complex=True`` the raw inverse FFT is returned so callers can
    inspect the imaginary residue.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    spec = np.fft.fft(x, axis=-1)
    shifted = np.abs(spec) * np.exp(1j * (np.angle(spec) + delta_phase * _phase_sign(n)))
    out = np.fft.ifft(shifted, axis=-1)
    return out if return_complex else out.real


def spectral_scale(x, beta: float, return_complex: bool = False):
    x = np.asarray(x, dtype=np.float64)
    spec = np.fft.fft(x, axis=-1)
    out = np.fft.ifft(beta * np.abs(spec) * np.exp(1j * np.angle(spec)), axis=-1)
    return out if return_complex else out.real


def band_mask(n: int, fs: float, lo: float, hi: float) -> np.ndarray:
    """Two-sided binary mask selecting ``lo <= |f| < hi``."""
    f = np.abs(np.fft.fftfreq(n, d=1.0 / fs))
    return (f >= lo) & (f < hi)


def band_noise(x, band: Tuple[float, float], sigma: float, rng=None, fs: float = DEFAULT_FS,
               return_complex: bool = False):
    """Add conjugate-symmetric complex Gaussian noise inside ``band``.

    ``sigma`` is in time-domain units: a full-band mask would add white
    noise of standard deviation ``sigma``.  Under the unnormalized forward
    FFT this means each spectral coefficient gets ``CN(0, T * sigma^2)``.
    """
    lo, hi = band
    if not 0 <= lo < hi <= fs / 2:
        raise ValueError(f"band must satisfy 0 <= lo < hi <= fs/2, got {band}")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    spec = np.fft.fft(x, axis=-1)
    mask = band_mask(n, fs, lo, hi)
    if sigma == 0 or not mask.any():
        out = np.fft.ifft(spec, axis=-1)
        return out if return_complex else out.real
    rng = np.random.default_rng(rng)
    scale = sigma * np.sqrt(n)
    half = n // 2 + 1
    noise_pos = (rng.normal(size=x.shape[:-1] + (half,))
                 + 1j * rng.normal(size=x.shape[:-1] + (half,))) * (scale / np.sqrt(2.0))
    noise_pos[..., 0] = noise_pos[..., 0].real * np.sqrt(2.0)
    if n % 2 == 0:
        noise_pos[..., -1] = noise_pos[..., -1].real * np.sqrt(2.0)
    noise = np.zeros(spec.shape, dtype=complex)
    noise[..., :half] = noise_pos
    # mirror: bin n-k is the conjugate of bin k
    k = np.arange(1, n - half + 1)
    noise[..., n - k] = np.conj(noise_pos[..., k])
    out = np.fft.ifft(spec + mask * noise, axis=-1)
    return out if return_complex else out.real


# ---------------------------------------------------------------------------
# parameterized operators


DEFAULT_RANGES: Dict[AugKind, Dict[str, Any]] = {
    AugKind.GAUSSIAN_NOISE: {"sigma": (0.05, 0.2)},
    AugKind.TIME_SHIFT: {"max_shift": 50},
    AugKind.AMPLITUDE_SCALE: {"alpha": (0.8, 1.2)},
    AugKind.RANDOM_MASK: {"length": 10},
    AugKind.FREQUENCY_SHIFT: {"max_phase": 2.0},
    AugKind.SPECTRAL_SCALE: {"beta": (0.5, 1.5)},
    AugKind.BAND_NOISE: {"sigma": (0.05, 0.2), "bands": tuple(EEG_BANDS.values()), "fs": DEFAULT_FS},
}


@dataclass
class AugOp:
    """An augmentation kind plus the ranges its parameters are drawn from."""

    kind: AugKind
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = AugKind(self.kind)
        merged = dict(DEFAULT_RANGES[self.kind])
        merged.update(self.params)
        self.params = merged

    def sample(self, rng: np.random.Generator, n_samples: int) -> Dict[str, Any]:
        """Draw concrete parameters for one application.

        A range given as a ``(lo, hi)`` pair is sampled uniformly; a scalar
        pins the value.
        """
        p = self.params
        k = self.kind
        if k is AugKind.GAUSSIAN_NOISE:
            return {"sigma": _draw(rng, p["sigma"]), "noise_seed": int(rng.integers(2**63))}
        if k is AugKind.TIME_SHIFT:
            if "delta" in p:
                return {"delta": int(p["delta"])}
            m = int(p["max_shift"])
            return {"delta": int(rng.integers(-m, m + 1))}
        if k is AugKind.AMPLITUDE_SCALE:
            return {"alpha": _draw(rng, p["alpha"])}
        if k is AugKind.RANDOM_MASK:
            length = min(int(p["length"]), n_samples)
            start = int(p["t_start"]) if "t_start" in p else int(rng.integers(0, n_samples - length + 1))
            return {"t_start": start, "t_end": start + length - 1}
        if k is AugKind.FREQUENCY_SHIFT:
            if "delta_phase" in p:
                return {"delta_phase": float(p["delta_phase"])}
            m = float(p["max_phase"])
            return {"delta_phase": float(rng.uniform(-m, m))}
        if k is AugKind.SPECTRAL_SCALE:
            return {"beta": _draw(rng, p["beta"])}
        if "band" in p:
            band = p["band"]
        else:
            bands = p["bands"]
            band = bands[int(rng.integers(len(bands)))]
        return {"band": (float(band[0]), float(band[1])), "sigma": _draw(rng, p["sigma"]),
                "fs": float(p["fs"]), "noise_seed": int(rng.integers(2**63))}


def _draw(rng: np.random.Generator, spec) -> float:
    if isinstance(spec, (tuple, list)):
        return float(rng.uniform(*spec))
    return float(spec)


def apply(kind: Union[AugKind, str], x, params: Dict[str, Any]) -> np.ndarray:
    """Apply one operator with concrete parameters."""
    kind = AugKind(kind)
    if kind is AugKind.GAUSSIAN_NOISE:
        return gaussian_noise(x, params["sigma"], params.get("noise_seed"))
    if kind is AugKind.TIME_SHIFT:
        return time_shift(x, params["delta"])
    if kind is AugKind.AMPLITUDE_SCALE:
        return amplitude_scale(x, params["alpha"])
    if kind is AugKind.RANDOM_MASK:
        return random_mask(x, params["t_start"], params["t_end"])
    if kind is AugKind.FREQUENCY_SHIFT:
        return frequency_shift(x, params["delta_phase"])
    if kind is AugKind.SPECTRAL_SCALE:
        return spectral_scale(x, params["beta"])
    return band_noise(x, tuple(params["band"]), params["sigma"], params.get("noise_seed"),
                      fs=params.get("fs", DEFAULT_FS))


def default_ops(fs: float = DEFAULT_FS) -> List[AugOp]:
    ops = [AugOp(k) for k in AugKind]
    ops[-1].params["fs"] = fs
    nyq = fs / 2
    ops[-1].params["bands"] = tuple((lo, min(hi, nyq)) for lo, hi in ops[-1].params["bands"] if lo < nyq)
    return ops


@dataclass
class AugOutcome:
    output: np.ndarray
    applied: List[Tuple[AugKind, Dict[str, Any]]]
    rng_seed: int


def compose(plan: Sequence[AugOp], x, rng=None) -> AugOutcome:
    """Apply ``plan`` left to right with freshly sampled parameters."""
    if not plan:
        raise ValueError("plan must be non-empty")
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(2**63))
    elif rng is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
    else:
        seed = int(rng)
    gen = np.random.default_rng(seed)
    out = np.asarray(x, dtype=np.float64)
    applied = []
    for op in plan:
        params = op.sample(gen, out.shape[-1])
        out = apply(op.kind, out, params)
        applied.append((op.kind, params))
    return AugOutcome(out, applied, seed)


def replay(applied: Sequence[Tuple[AugKind, Dict[str, Any]]], x) -> np.ndarray:
    out = np.asarray(x, dtype=np.float64)
    for kind, params in applied:
        out = apply(kind, out, params)
    return out
