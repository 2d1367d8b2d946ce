"""Occlusion importance: accuracy drop after removing a band, channel or time window.

``model`` may be a :class:`~mclpd.encoder.TFEncoder`, any object with a
``predict(x)`` method, or a plain callable mapping an epoch array to labels.
Perturbations are deterministic, so scores reproduce exactly.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .augment import band_mask
from .signal import EEG_BANDS, EpochSet

N_WINDOWS = 10


def _predictor(model) -> Callable[[np.ndarray], np.ndarray]:
    from .encoder import TFEncoder

    if isinstance(model, TFEncoder):
        from .pipeline import predict_logits

        return lambda x: predict_logits(model, x).argmax(1)
    if hasattr(model, "predict"):
        return model.predict
    if callable(model):
        return model
    raise TypeError(f"cannot predict with {type(model).__name__}")


def accuracy(model, data: np.ndarray, labels: np.ndarray) -> float:
    preds = np.asarray(_predictor(model)(np.asarray(data, dtype=np.float32)))
    return float(np.mean(preds == labels))


def remove_band(x: np.ndarray, fs: float, band: Tuple[float, float]) -> np.ndarray:
    """Zero every FFT bin with ``lo <= |f| < hi``; both mirrors go together."""
    x = np.asarray(x, dtype=np.float64)
    spec = np.fft.fft(x, axis=-1)
    spec[..., band_mask(x.shape[-1], fs, *band)] = 0
    return np.fft.ifft(spec, axis=-1).real


def remove_channel(x: np.ndarray, index: int) -> np.ndarray:
    out = np.array(x, dtype=np.float64)
    out[:, index] = 0.0
    return out


def window_bounds(n_samples: int, n_windows: int = N_WINDOWS) -> List[Tuple[int, int]]:
    """Half-open windows of ``n_samples // n_windows``; the last absorbs any remainder."""
    if n_samples < n_windows:
        raise ValueError(f"need at least {n_windows} samples, got {n_samples}")
    width = n_samples // n_windows
    bounds = [(w * width, (w + 1) * width) for w in range(n_windows)]
    bounds[-1] = (bounds[-1][0], n_samples)
    return bounds


def remove_window(x: np.ndarray, w: int, n_windows: int = N_WINDOWS) -> np.ndarray:
    if not 0 <= w < n_windows:
        raise ValueError(f"window {w} outside 0..{n_windows - 1}")
    lo, hi = window_bounds(x.shape[-1], n_windows)[w]
    out = np.array(x, dtype=np.float64)
    out[..., lo:hi] = 0.0
    return out


def _require_labels(test: EpochSet):
    if test.labels is None:
        raise ValueError("importance needs a labeled test set")


def band_importance(model, test: EpochSet, band: str, baseline: Optional[float] = None) -> float:
    if band not in EEG_BANDS:
        raise ValueError(f"unknown band {band!r}; expected one of {sorted(EEG_BANDS)}")
    _require_labels(test)
    base = accuracy(model, test.data, test.labels) if baseline is None else baseline
    return base - accuracy(model, remove_band(test.data, test.fs, EEG_BANDS[band]), test.labels)


def channel_importance(model, test: EpochSet, channel: str, baseline: Optional[float] = None) -> float:
    names = list(test.channel_names)
    if channel not in names:
        raise KeyError(f"unknown channel {channel!r}")
    _require_labels(test)
    base = accuracy(model, test.data, test.labels) if baseline is None else baseline
    return base - accuracy(model, remove_channel(test.data, names.index(channel)), test.labels)


def window_importance(model, test: EpochSet, w: int, baseline: Optional[float] = None) -> float:
    _require_labels(test)
    base = accuracy(model, test.data, test.labels) if baseline is None else baseline
    return base - accuracy(model, remove_window(test.data, w), test.labels)


def percentages(scores: Mapping[str, float]) -> Dict[str, float]:
    """Each score as a percentage of the summed drop (all zeros if that sum is 0)."""
    total = sum(scores.values())
    if total == 0:
        return {k: 0.0 for k in scores}
    return {k: 100.0 * v / total for k, v in scores.items()}


@dataclass
class ImportanceReport:
    baseline_accuracy: float
    band_scores: Dict[str, float] = field(default_factory=dict)
    channel_scores: Dict[str, float] = field(default_factory=dict)
    window_scores: List[float] = field(default_factory=list)

    def tables(self) -> Dict[str, Dict[str, float]]:
        return {
            "band": dict(self.band_scores),
            "channel": dict(self.channel_scores),
            "window": {f"W{i + 1}": s for i, s in enumerate(self.window_scores)},
        }

    def ranking(self, dimension: str) -> List[str]:
        table = self.tables()[dimension]
        return sorted(table, key=lambda k: -table[k])

    def to_csv(self, dimension: str) -> str:
        table = self.tables()[dimension]
        pct = percentages(table)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["feature", "accuracy_drop", "percent_of_total"])
        for key, value in table.items():
            writer.writerow([key, repr(float(value)), repr(float(pct[key]))])
        return buf.getvalue()

    def to_svg(self, dimension: str) -> str:
        return bar_chart_svg(self.tables()[dimension], title=f"{dimension} importance (accuracy drop)")


def explain(model, test: EpochSet, bands: Sequence[str] = tuple(EEG_BANDS),
            channels: Optional[Sequence[str]] = None) -> ImportanceReport:
    """Score every band, channel and window against a single baseline."""
    _require_labels(test)
    base = accuracy(model, test.data, test.labels)
    channels = list(test.channel_names) if channels is None else list(channels)
    return ImportanceReport(
        baseline_accuracy=base,
        band_scores={b: band_importance(model, test, b, base) for b in bands},
        channel_scores={c: channel_importance(model, test, c, base) for c in channels},
        window_scores=[window_importance(model, test, w, base) for w in range(N_WINDOWS)],
    )


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def bar_chart_svg(values: Mapping[str, float], title: str = "", bar_width: int = 28) -> str:
    """Minimal standalone SVG bar chart; negative bars hang below the axis."""
    keys = list(values)
    vals = np.array([float(values[k]) for k in keys]) if keys else np.zeros(0)
    height, top, bottom, left = 220.0, 30.0, 50.0, 40.0
    width = left + 10 + max(1, len(keys)) * (bar_width + 6)
    hi = max(float(vals.max(initial=0.0)), 0.0)
    lo = min(float(vals.min(initial=0.0)), 0.0)
    span = (hi - lo) or 1.0
    scale = (height - top - bottom) / span
    axis_y = top + hi * scale
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'font-family="sans-serif" font-size="10">',
        f'<text x="{left}" y="16" font-size="12">{_esc(title)}</text>',
        f'<line x1="{left}" y1="{axis_y:.2f}" x2="{width - 5:.0f}" y2="{axis_y:.2f}" stroke="black"/>',
    ]
    for i, (key, v) in enumerate(zip(keys, vals)):
        x = left + 5 + i * (bar_width + 6)
        y, h = (axis_y - v * scale, v * scale) if v >= 0 else (axis_y, -v * scale)
        parts.append(f'<rect x="{x:.1f}" y="{y:.2f}" width="{bar_width}" height="{h:.2f}" fill="#4a7bb7">'
                     f'<title>{_esc(key)}: {v:.4f}</title></rect>')
        parts.append(f'<text x="{x + bar_width / 2:.1f}" y="{height - bottom + 14:.0f}" text-anchor="middle" '
                     f'transform="rotate(45 {x + bar_width / 2:.1f} {height - bottom + 14:.0f})">{_esc(key)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
