"""Synthetic multi-site EEG with a controllable beta-band class signature.

Each subject gets one continuous record built from a 1/f background plus
oscillations in the canonical bands (frequencies redrawn every epoch).  For class-1 subjects the
beta band (13-30 Hz) of the signature channels is scaled in the frequency
domain so its power grows by ``beta_multiplier``.  A site then applies a
per-channel gain, white sensor noise and mains interference.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .signal import EEG_BANDS, EpochSet, bandpass, epoch_split, zscore

CHANNELS_30 = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2",
    "FC6", "T7", "C3", "Cz", "C4", "T8", "CP5", "CP1", "CP2", "CP6",
    "P7", "P3", "Pz", "P4", "P8", "PO3", "PO4", "O1", "Oz", "O2",
)

# amplitude of the oscillatory components per band, relative to unit-std background
BAND_AMPLITUDE = {"delta": 1.0, "theta": 0.8, "alpha": 1.5, "beta": 1.0, "gamma": 0.3}
SIGNATURE_BAND = (13.0, 30.0)


@dataclass(frozen=True)
class Site:
    """Acquisition-site domain shift."""

    name: str = "siteA"
    gain: float = 1.0
    gain_jitter: float = 0.05
    noise_sigma: float = 0.3
    line_amplitude: float = 0.5
    line_freq: float = 50.0


SITES: Dict[str, Site] = {
    "siteA": Site("siteA", 1.0, 0.05, 0.3, 0.5, 50.0),
    "siteB": Site("siteB", 1.2, 0.10, 0.45, 0.8, 60.0),
    "siteC": Site("siteC", 0.8, 0.10, 0.2, 0.3, 50.0),
}


@dataclass(frozen=True)
class SynthSpec:
    n_subjects_per_class: int = 10
    epochs_per_subject: int = 10
    n_channels: int = 30
    fs: float = 500.0
    dur: float = 5.0
    beta_multiplier: float = 2.0
    signature_channels: Optional[Tuple[int, ...]] = None  # None: all channels
    site: Site = field(default_factory=Site)
    subject_jitter: float = 0.01
    epoch_jitter: float = 0.1
    n_components: int = 12
    band_amplitude: Optional[Dict[str, float]] = None  # None: BAND_AMPLITUDE
    subject_offset: int = 0
    seed: int = 0

    def channel_names(self) -> Tuple[str, ...]:
        if self.n_channels <= len(CHANNELS_30):
            return CHANNELS_30[: self.n_channels]
        return tuple(f"E{i + 1}" for i in range(self.n_channels))


def _pink_noise(rng, shape, fs) -> np.ndarray:
    n = shape[-1]
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    coef = rng.normal(size=shape[:-1] + (len(freqs),)) + 1j * rng.normal(size=shape[:-1] + (len(freqs),))
    scale = np.zeros_like(freqs)
    scale[freqs > 0] = 1.0 / np.sqrt(np.maximum(freqs[freqs > 0], 0.5))
    x = np.fft.irfft(coef * scale, n=n, axis=-1)
    return x / x.std(axis=-1, keepdims=True)


def _subject_record(spec: SynthSpec, rng: np.random.Generator, label: int) -> np.ndarray:
    n = int(round(spec.fs * spec.dur)) * spec.epochs_per_subject
    c = spec.n_channels
    x = _pink_noise(rng, (c, n), spec.fs)
    n_seg = spec.epochs_per_subject
    seg = n // n_seg
    seg_freqs = np.fft.rfftfreq(seg, 1.0 / spec.fs)
    k = spec.n_components
    for band, (lo, hi) in EEG_BANDS.items():
        amp = (spec.band_amplitude or BAND_AMPLITUDE)[band] * np.exp(rng.normal(0, spec.subject_jitter))
        bins = np.flatnonzero((seg_freqs >= lo) & (seg_freqs < min(hi, spec.fs / 2)))
        if len(bins) == 0:
            continue  # band above Nyquist or finer than the bin spacing
        # k sinusoids per epoch-length segment on distinct bins of the band;
        # redrawn every segment so no spectral line identifies a subject
        picks = np.stack([rng.choice(bins, size=min(k, len(bins)), replace=False) for _ in range(n_seg)])
        phase = rng.uniform(0, 2 * np.pi, size=(c, n_seg, picks.shape[1]))
        # per-epoch jitter dominates the subject term, so subjects carry little identity in band power
        amp = amp * np.exp(rng.normal(0, spec.epoch_jitter, size=(1, n_seg, 1)))
        weight = amp * (1 + 0.1 * rng.normal(size=(c, n_seg, 1))) * np.sqrt(2.0 / picks.shape[1])
        coef = np.zeros((c, n_seg, len(seg_freqs)), dtype=complex)
        # a bin coefficient of A * seg / 2 is a sinusoid of amplitude A
        np.put_along_axis(coef, np.broadcast_to(picks, phase.shape), weight * seg / 2 * np.exp(1j * phase), axis=-1)
        x += np.fft.irfft(coef, n=seg, axis=-1).reshape(c, n_seg * seg)
    if label == 1 and spec.beta_multiplier != 1.0:
        chans = range(c) if spec.signature_channels is None else spec.signature_channels
        freqs = np.fft.rfftfreq(n, 1.0 / spec.fs)
        band = (freqs >= SIGNATURE_BAND[0]) & (freqs < SIGNATURE_BAND[1])
        chans = list(chans)
        coef = np.fft.rfft(x[chans], axis=-1)
        coef[:, band] *= np.sqrt(spec.beta_multiplier)
        x[chans] = np.fft.irfft(coef, n=n, axis=-1)
    return x


def _apply_site(spec: SynthSpec, rng: np.random.Generator, x: np.ndarray, gains: np.ndarray) -> np.ndarray:
    site = spec.site
    t = np.arange(x.shape[-1]) / spec.fs
    x = gains[:, None] * x
    x = x + rng.normal(0, site.noise_sigma, size=x.shape)
    if site.line_amplitude and site.line_freq < spec.fs / 2:
        x = x + site.line_amplitude * np.sin(2 * np.pi * site.line_freq * t + rng.uniform(0, 2 * np.pi))
    return x


def generate_records(spec: SynthSpec):
    """Yield continuous per-subject records as ``(subject_id, label, record)``."""
    rng = np.random.default_rng(spec.seed)
    site_rng = np.random.default_rng([spec.seed, 7919])
    gains = spec.site.gain * (1 + spec.site.gain_jitter * site_rng.standard_normal(spec.n_channels))
    sid = spec.subject_offset
    for label in (0, 1):
        for _ in range(spec.n_subjects_per_class):
            sub_rng = np.random.default_rng(rng.integers(2**63))
            yield sid, label, _apply_site(spec, sub_rng, _subject_record(spec, sub_rng, label), gains)
            sid += 1


def generate(spec: SynthSpec = SynthSpec(), preprocess: bool = False,
             lo: float = 1.0, hi: float = 45.0, verify: bool = True,
             dtype=np.float32) -> EpochSet:
    """Labeled epochs for every subject of ``spec``.

    With ``preprocess=True`` each continuous record is band-passed before
    epoching and every epoch is z-scored.  With ``verify`` and a multiplier
    of at least 1.5, the raw class-1/class-0 beta power ratio on the
    signature channels is checked to be >= 1.5.  Records are generated one
    subject at a time and stored as ``dtype`` to bound memory.
    """
    names = spec.channel_names()
    chans = slice(None) if spec.signature_channels is None else list(spec.signature_channels)
    power = {0: [], 1: []}
    sets = []
    for sid, label, rec in generate_records(spec):
        power[label].append(band_power(rec[chans], spec.fs).mean())
        if preprocess:
            rec = bandpass(rec, lo, hi, fs=spec.fs)
        es = epoch_split(rec, spec.fs, spec.dur, sid, names, label)
        if preprocess:
            es = zscore(es)
        sets.append(es.with_data(es.data.astype(dtype)))
    if verify and spec.beta_multiplier >= 1.5 and power[0] and power[1]:
        ratio = np.mean(power[1]) / np.mean(power[0])
        if ratio < 1.5:
            raise RuntimeError(f"class signature too weak: beta power ratio {ratio:.3f} < 1.5")
    return EpochSet.concatenate(sets)


def band_power(x: np.ndarray, fs: float, band: Tuple[float, float] = SIGNATURE_BAND) -> np.ndarray:
    """Mean periodogram power inside ``band`` along the last axis."""
    n = x.shape[-1]
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    sel = (freqs >= band[0]) & (freqs < band[1])
    psd = np.abs(np.fft.rfft(x, axis=-1)) ** 2 / n
    return psd[..., sel].mean(axis=-1)


def beta_ratio(es: EpochSet, channels: Optional[Sequence[int]] = None) -> float:
    """Class-1 / class-0 mean beta power over ``channels``."""
    chans = slice(None) if channels is None else list(channels)
    power = band_power(es.data[:, chans], es.fs).mean(axis=-1)
    return float(power[es.labels == 1].mean() / power[es.labels == 0].mean())


def site_spec(site: str, **kwargs) -> SynthSpec:
    return SynthSpec(site=SITES[site], **kwargs)
