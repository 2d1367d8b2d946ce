"""Training mathematics: AdamW, Lookahead, SWA, LR schedules and unfreezing.

Parameters are handled as ``{name: tensor}`` dicts.  The fast weights are
the live model tensors, updated in place; everything else lives in
:class:`TrainState`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Set, Union

import torch
from torch import nn


class NonFiniteError(FloatingPointError):
    """A gradient or parameter contained NaN or Inf."""


def layer_lr(eta0: float, gamma: float, n_layers: int, layer: int) -> float:
    """Learning rate of layer ``layer`` (1 = bottom): ``eta0 * gamma**(L - l)``."""
    if not 1 <= layer <= n_layers:
        raise ValueError(f"layer {layer} outside 1..{n_layers}")
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    return eta0 * gamma ** (n_layers - layer)


def unfrozen_set(n_layers: int, stage: int) -> Set[int]:
    """Top ``stage`` layers: ``{L, L-1, ..., L-stage+1}``."""
    if not 1 <= stage <= n_layers:
        raise ValueError(f"stage {stage} outside 1..{n_layers}")
    return set(range(n_layers - stage + 1, n_layers + 1))


def stage_at(epoch: int, n_epochs: int, n_layers: int, every: Optional[int] = None) -> int:
    """Unfreeze stage active during ``epoch`` (0-based); advances every ``ceil(n_epochs / L)``."""
    every = every or max(1, math.ceil(n_epochs / n_layers))
    return min(n_layers, 1 + epoch // every)


def cosine_warm_restarts(step: float, t0: int = 10, mult: int = 2, eta_max: float = 1e-4,
                         eta_min: float = 0.0) -> float:
    """SGDR cosine schedule with cycle lengths ``t0, t0*mult, t0*mult**2, ...``."""
    if t0 < 1 or mult < 1:
        raise ValueError("t0 and mult must be >= 1")
    t_cur, t_i = float(step), float(t0)
    if mult == 1:
        t_cur = t_cur % t_i
    else:
        while t_cur >= t_i:
            t_cur -= t_i
            t_i *= mult
    return eta_min + (eta_max - eta_min) * (1 + math.cos(math.pi * t_cur / t_i)) / 2


@dataclass
class AdamMoments:
    m: Dict[str, torch.Tensor] = field(default_factory=dict)
    v: Dict[str, torch.Tensor] = field(default_factory=dict)
    t: Dict[str, int] = field(default_factory=dict)


def _check_finite(tensors: Mapping[str, torch.Tensor], what: str):
    for name, t in tensors.items():
        if t is not None and not torch.isfinite(t).all():
            raise NonFiniteError(f"non-finite {what} for {name!r}")


def adamw_step(params: Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor],
               moments: AdamMoments, lr: Union[float, Mapping[str, float]], weight_decay: float = 0.0,
               betas=(0.9, 0.999), eps: float = 1e-8, skip: Iterable[str] = ()) -> None:
    """Decoupled-weight-decay Adam, in place.

    Decay multiplies the weights by ``1 - lr * weight_decay`` before the
    adaptive step and never enters the moment estimates.  Names in ``skip``
    and names without a gradient are left bit-identical.
    """
    _check_finite(grads, "gradient")
    _check_finite(params, "parameter")
    skip = set(skip)
    b1, b2 = betas
    with torch.no_grad():
        for name, p in params.items():
            g = grads.get(name)
            if name in skip or g is None:
                continue
            step_lr = lr[name] if isinstance(lr, Mapping) else lr
            if name not in moments.m:
                moments.m[name] = torch.zeros_like(p)
                moments.v[name] = torch.zeros_like(p)
                moments.t[name] = 0
            moments.t[name] += 1
            t = moments.t[name]
            m, v = moments.m[name], moments.v[name]
            if weight_decay:
                p.mul_(1 - step_lr * weight_decay)
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p.sub_(step_lr * m_hat / (v_hat.sqrt() + eps))


@dataclass
class TrainState:
    """Fast/slow weights, optimizer moments and the SWA accumulator."""

    fast: Dict[str, torch.Tensor]
    slow: Dict[str, torch.Tensor] = None
    moments: AdamMoments = field(default_factory=AdamMoments)
    k: int = 5
    slow_rate: float = 0.5
    step: int = 0
    stage: int = 1
    schedule_pos: float = 0.0
    swa_sum: Dict[str, torch.Tensor] = field(default_factory=dict)
    swa_count: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 <= self.slow_rate <= 1:
            raise ValueError("slow_rate must lie in [0, 1]")
        if self.slow is None:
            self.slow = {n: p.detach().clone() for n, p in self.fast.items()}

    @classmethod
    def from_module(cls, module: nn.Module, **kwargs) -> "TrainState":
        return cls({n: p.data for n, p in module.named_parameters()}, **kwargs)


def lookahead_step(state: TrainState, grads: Mapping[str, torch.Tensor],
                   lr: Union[float, Mapping[str, float]], weight_decay: float = 0.0,
                   frozen: Iterable[str] = ()) -> TrainState:
    """One inner AdamW step on the fast weights plus the periodic slow sync.

    Every ``k`` inner steps: ``slow += slow_rate * (fast - slow)`` and the
    fast weights are reset to the new slow weights.  Non-finite gradients
    raise :class:`NonFiniteError` before anything is modified.
    """
    _check_finite(grads, "gradient")
    frozen = set(frozen)
    adamw_step(state.fast, grads, state.moments, lr, weight_decay, skip=frozen)
    state.step += 1
    if state.step % state.k == 0:
        with torch.no_grad():
            for name, fast in state.fast.items():
                if name in frozen:
                    continue
                slow = state.slow[name]
                slow.add_(fast - slow, alpha=state.slow_rate)
                fast.copy_(slow)
    return state


def swa_update(state: TrainState, checkpoint: Optional[Mapping[str, torch.Tensor]] = None) -> TrainState:
    """Add ``checkpoint`` (default: current fast weights) to the running average."""
    checkpoint = state.fast if checkpoint is None else checkpoint
    with torch.no_grad():
        for name, p in checkpoint.items():
            acc = state.swa_sum.get(name)
            if acc is None:
                state.swa_sum[name] = p.detach().to(torch.float64).clone()
            else:
                if acc.shape != p.shape:
                    raise ValueError(f"shape mismatch for {name!r}: {tuple(acc.shape)} vs {tuple(p.shape)}")
                acc.add_(p.detach().to(torch.float64))
    state.swa_count += 1
    return state


def swa_average(state: TrainState) -> Dict[str, torch.Tensor]:
    if state.swa_count == 0:
        raise ValueError("no SWA checkpoints registered")
    return {n: s / state.swa_count for n, s in state.swa_sum.items()}


@torch.no_grad()
def recompute_bn(model: nn.Module, batches: Iterable[torch.Tensor], forward=None,
                 scope: Optional[nn.Module] = None) -> None:
    """Reset batch-norm running stats and re-estimate them as a cumulative mean.

    Only batch-norm layers inside ``scope`` (default: the whole model) are
    reset, so branches that ``forward`` never touches keep their statistics.
    """
    bns = [m for m in (scope or model).modules() if isinstance(m, nn.modules.batchnorm._BatchNorm)]
    if not bns:
        return
    saved = {bn: bn.momentum for bn in bns}
    was_training = model.training
    for bn in bns:
        bn.reset_running_stats()
        bn.momentum = None
    model.train()
    forward = forward or model
    for x in batches:
        forward(x)
    for bn, mom in saved.items():
        bn.momentum = mom
    model.train(was_training)


def swa_finalize(state: TrainState, model: nn.Module, batches: Iterable[torch.Tensor],
                 forward=None, scope: Optional[nn.Module] = None) -> Dict[str, torch.Tensor]:
    """Load the SWA average into ``model`` and refresh its BN statistics."""
    avg = swa_average(state)
    params = dict(model.named_parameters())
    with torch.no_grad():
        for name, value in avg.items():
            params[name].copy_(value.to(params[name].dtype))
    recompute_bn(model, batches, forward, scope)
    return avg
