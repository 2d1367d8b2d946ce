"""Three-branch time / frequency / time-frequency CNN encoder."""
from __future__ import annotations

from typing import Dict, List, NamedTuple, Sequence, Tuple

import torch
from torch import nn
import torch.nn.functional as F

KERNELS = (7, 5, 3)
WIDTHS = (32, 64, 128)
STRIDE = 2
SPEC_EPS = 1e-12


class BranchOutput(NamedTuple):
    h_t: torch.Tensor
    h_f: torch.Tensor
    h_tf: torch.Tensor
    z_t: torch.Tensor
    z_f: torch.Tensor
    z_tf: torch.Tensor


def magnitude_spectrum(x: torch.Tensor) -> torch.Tensor:
    """Two-sided ``|FFT(x)|`` along time, z-scored per channel.

    Flat spectra (e.g. an all-zero input) map to zeros.
    """
    mag = torch.fft.fft(x, dim=-1).abs()
    mu = mag.mean(dim=-1, keepdim=True)
    sd = mag.std(dim=-1, unbiased=False, keepdim=True)
    flat = sd < SPEC_EPS
    return torch.where(flat, torch.zeros_like(mag), (mag - mu) / torch.where(flat, torch.ones_like(sd), sd))


class ConvBlock(nn.Sequential):
    """Conv1d -> BatchNorm -> ReLU."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = STRIDE):
        super().__init__(
            nn.Conv1d(c_in, c_out, kernel, stride=stride, padding=kernel // 2, bias=False),
            nn.BatchNorm1d(c_out, momentum=0.1),
            nn.ReLU(),
        )


class ConvBranch(nn.Module):
    def __init__(self, in_channels: int, widths: Sequence[int] = WIDTHS, kernels: Sequence[int] = KERNELS):
        super().__init__()
        if len(widths) != len(kernels):
            raise ValueError("widths and kernels must have equal length")
        self.in_channels = in_channels
        chans = [in_channels, *widths]
        self.blocks = nn.ModuleList(
            ConvBlock(chans[i], chans[i + 1], kernels[i]) for i in range(len(widths))
        )

    @property
    def out_dim(self) -> int:
        return self.blocks[-1][0].out_channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 3 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (B, {self.in_channels}, T) input, got {tuple(x.shape)}")
        for block in self.blocks:
            x = block(x)
        return x.mean(dim=-1)


class ProjectionHead(nn.Module):
    """Two-layer MLP: ``W2 relu(W1 h + b1) + b2``."""

    def __init__(self, dim: int, hidden: int, out: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, out)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        if h.shape[-1] != self.fc1.in_features:
            raise ValueError(f"expected feature dim {self.fc1.in_features}, got {h.shape[-1]}")
        return self.fc2(F.relu(self.fc1(h)))


class TFEncoder(nn.Module):
    """Temporal, frequency and joint branches with independent weights and heads.

    ``classifier`` is a single linear layer over the joint (``h_tf``)
    embedding, used for fine-tuning.
    """

    def __init__(self, n_channels: int = 30, widths: Sequence[int] = WIDTHS,
                 kernels: Sequence[int] = KERNELS, proj_dim: int = 64, n_classes: int = 2):
        super().__init__()
        self.n_channels = n_channels
        self.temporal = ConvBranch(n_channels, widths, kernels)
        self.frequency = ConvBranch(n_channels, widths, kernels)
        self.tf = ConvBranch(2 * n_channels, widths, kernels)
        dim = self.tf.out_dim
        self.proj_t = ProjectionHead(dim, dim, proj_dim)
        self.proj_f = ProjectionHead(dim, dim, proj_dim)
        self.proj_tf = ProjectionHead(dim, dim, proj_dim)
        self.classifier = nn.Linear(dim, n_classes)

    @property
    def embed_dim(self) -> int:
        return self.tf.out_dim

    def _check(self, x: torch.Tensor):
        if x.dim() != 3 or x.shape[1] != self.n_channels:
            raise ValueError(f"expected (B, {self.n_channels}, T) input, got {tuple(x.shape)}")

    def embed_temporal(self, x):
        self._check(x)
        return self.temporal(x)

    def embed_frequency(self, x):
        self._check(x)
        return self.frequency(magnitude_spectrum(x))

    def embed_tf(self, x, spectrum=None):
        self._check(x)
        spectrum = magnitude_spectrum(x) if spectrum is None else spectrum
        return self.tf(torch.cat([x, spectrum], dim=1))

    def forward(self, x: torch.Tensor) -> BranchOutput:
        self._check(x)
        spec = magnitude_spectrum(x)
        h_t = self.temporal(x)
        h_f = self.frequency(spec)
        h_tf = self.tf(torch.cat([x, spec], dim=1))
        return BranchOutput(h_t, h_f, h_tf, self.proj_t(h_t), self.proj_f(h_f), self.proj_tf(h_tf))

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.embed_tf(x))

    def layer_units(self) -> List[Tuple[str, nn.Module]]:
        """Fine-tuning layer units ordered bottom (depth 1) to top (depth L).

        Units are the joint-branch conv blocks followed by the classifier.
        """
        units = [(f"tf.blocks.{i}", b) for i, b in enumerate(self.tf.blocks)]
        units.append(("classifier", self.classifier))
        return units

    def branch_depths(self) -> Dict[str, int]:
        """Depth index (1-based) of every parameter inside the conv branches."""
        depths = {}
        for branch in ("temporal", "frequency", "tf"):
            for i in range(len(getattr(self, branch).blocks)):
                prefix = f"{branch}.blocks.{i}."
                for name, _ in self.named_parameters():
                    if name.startswith(prefix):
                        depths[name] = i + 1
        return depths


def forward_temporal(x, model: TFEncoder):
    return model.embed_temporal(x)


def forward_frequency(x, model: TFEncoder):
    return model.embed_frequency(x)


def forward_tf(x, model: TFEncoder):
    return model.embed_tf(x)


def project(h, head: ProjectionHead):
    return head(h)


def classify(h_tf, head: nn.Linear):
    if h_tf.shape[-1] != head.in_features:
        raise ValueError(f"expected feature dim {head.in_features}, got {h_tf.shape[-1]}")
    return head(h_tf)
