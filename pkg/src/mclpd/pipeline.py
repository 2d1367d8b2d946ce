"""Contrastive pre-training, cross-site fine-tuning and evaluation loops."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from . import augsched
from .augment import compose, default_ops
from .config import RunConfig
from .encoder import TFEncoder
from .objective import contrastive_loss, smoothed_ce
from .optim import (AdamMoments, NonFiniteError, TrainState, adamw_step, cosine_warm_restarts,
                    layer_lr, lookahead_step, stage_at, swa_finalize, swa_update, unfrozen_set)
from .signal import EpochSet

log = logging.getLogger(__name__)

LogFn = Optional[Callable[[Dict], None]]


class SubjectLeakError(AssertionError):
    """The same subject appears in two partitions."""


@dataclass
class Metrics:
    accuracy: float
    f1: float
    precision: float
    recall: float
    loss: Optional[float] = None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def as_dict(self) -> Dict:
        return asdict(self)


def binary_metrics(preds, targets, loss: Optional[float] = None) -> Metrics:
    """Epoch-level metrics with PD (1) as the positive class; 0/0 ratios are 0."""
    preds = np.asarray(preds).ravel().astype(int)
    targets = np.asarray(targets).ravel().astype(int)
    if preds.size == 0:
        raise ValueError("empty prediction set")
    tp = int(((preds == 1) & (targets == 1)).sum())
    fp = int(((preds == 1) & (targets == 0)).sum())
    fn = int(((preds == 0) & (targets == 1)).sum())
    tn = int(((preds == 0) & (targets == 0)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics((tp + tn) / preds.size, f1, precision, recall, loss, tp, fp, fn, tn)


# ---------------------------------------------------------------------------
# subject-level partitioning


def check_disjoint(*sets: EpochSet) -> None:
    seen: Dict[int, int] = {}
    for k, es in enumerate(sets):
        for sid in np.unique(es.subject_ids):
            if seen.setdefault(int(sid), k) != k:
                raise SubjectLeakError(f"subject {sid} appears in partitions {seen[int(sid)]} and {k}")


def subject_split(es: EpochSet, fraction: float, rng: np.random.Generator) -> Tuple[EpochSet, EpochSet]:
    """Hold out whole subjects covering roughly ``fraction`` of the epochs.

    With labels present the hold-out is drawn per class (at least one
    subject per class when the class has two or more subjects).
    """
    subjects = np.unique(es.subject_ids)
    if es.labels is None:
        groups = [subjects]
    else:
        label_of = {int(s): int(es.labels[es.subject_ids == s][0]) for s in subjects}
        groups = [np.array([s for s in subjects if label_of[int(s)] == c]) for c in (0, 1)]
    held = []
    for group in groups:
        if len(group) == 0:
            continue
        order = rng.permutation(group)
        counts = np.array([(es.subject_ids == s).sum() for s in order])
        target = fraction * counts.sum()
        n_take = int(np.searchsorted(np.cumsum(counts), target, side="left")) + 1
        n_take = min(max(n_take, 1 if len(group) > 1 else 0), len(group) - 1 if len(group) > 1 else 0)
        held.extend(order[:n_take].tolist())
    mask = np.isin(es.subject_ids, held)
    rest, out = es.subset(np.flatnonzero(~mask)), es.subset(np.flatnonzero(mask))
    check_disjoint(rest, out)
    return rest, out


def select_labeled(es: EpochSet, fraction: float, rng: np.random.Generator) -> EpochSet:
    """Label budget drawn subject by subject, separately per class.

    Each class receives ``round(fraction * n_class)`` epochs (at least one):
    whole subjects are taken in random order and the last one is truncated.
    """
    if es.labels is None:
        raise ValueError("labels required")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    chosen: List[int] = []
    for c in (0, 1):
        idx = np.flatnonzero(es.labels == c)
        if idx.size == 0:
            raise ValueError(f"class {c} absent; cannot form a two-class labeled split")
        budget = max(1, int(round(fraction * idx.size)))
        for sid in rng.permutation(np.unique(es.subject_ids[idx])):
            sub = idx[es.subject_ids[idx] == sid]
            take = sub[rng.permutation(sub.size)[: budget - sum(es.labels[chosen] == c)]]
            chosen.extend(sorted(take.tolist()))
            if sum(es.labels[chosen] == c) >= budget:
                break
    return es.subset(np.array(sorted(chosen)))


def transfer_splits(es: EpochSet, cfg: RunConfig, rng: np.random.Generator
                    ) -> Tuple[EpochSet, Optional[EpochSet], EpochSet]:
    """Partition a labeled site into ``(labeled, val, test)`` by subject.

    ``test_fraction`` of the epochs is held out first.  The label budget is
    ``label_fraction`` of the remaining training epochs; ``val_fraction`` of
    the subjects left untouched by that budget forms the validation set.
    """
    fc = cfg.finetune
    train, test = subject_split(es, fc.test_fraction, rng)
    labeled = select_labeled(train, fc.label_fraction, rng)
    rest = train.subset(np.flatnonzero(~np.isin(train.subject_ids, labeled.subject_ids)))
    val = None
    if fc.val_fraction > 0 and len(rest) and len(np.unique(rest.subject_ids)) > 1:
        val = subject_split(rest, fc.val_fraction, rng)[1]
    check_disjoint(*(s for s in (labeled, val, test) if s is not None))
    return labeled, val, test


# ---------------------------------------------------------------------------
# helpers


def as_tensor(x: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))


def augment_batch(x: np.ndarray, plan, rng: np.random.Generator) -> np.ndarray:
    """Apply ``plan`` to every epoch with independently sampled parameters."""
    return np.stack([compose(plan, xi, rng).output for xi in x])


def _batches(n: int, size: int, rng: Optional[np.random.Generator] = None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, size):
        yield order[start:start + size]


def _sampler(cfg: RunConfig, threshold: float, fs: float) -> augsched.SamplerState:
    return augsched.SamplerState(default_ops(fs), temperature=cfg.sampler.temperature,
                                 threshold=threshold, decay=cfg.sampler.decay)


def view_loss(model: TFEncoder, views: Sequence[torch.Tensor], tau: float, cross_branch: bool = False):
    outs = [model(v) for v in views]
    if cross_branch:
        return contrastive_loss([z for o in outs for z in (o.z_t, o.z_f, o.z_tf)], tau), outs
    per_branch = [contrastive_loss([getattr(o, name) for o in outs], tau) for name in ("z_t", "z_f", "z_tf")]
    return sum(per_branch) / 3.0, outs


@torch.no_grad()
def tf_projection(model: TFEncoder, x: torch.Tensor) -> np.ndarray:
    was = model.training
    model.eval()
    z = model.proj_tf(model.embed_tf(x)).numpy()
    model.train(was)
    return z


def _finite(loss: torch.Tensor, where: str):
    if not torch.isfinite(loss):
        raise NonFiniteError(f"non-finite loss during {where}")


# ---------------------------------------------------------------------------
# pre-training


@dataclass
class PretrainResult:
    model: TFEncoder
    history: List[Dict] = field(default_factory=list)
    sampler: Optional[augsched.SamplerState] = None
    stopped_early: bool = False
    best_epoch: int = -1


def build_model(n_channels: int, cfg: RunConfig) -> TFEncoder:
    torch.manual_seed(cfg.seed)
    return TFEncoder(n_channels, cfg.model.widths, cfg.model.kernels, cfg.model.proj_dim)


def _val_loss(model, val: EpochSet, cfg: RunConfig) -> float:
    pc = cfg.pretrain
    rng = np.random.default_rng([cfg.seed, 0xA11])
    uniform = _sampler(cfg, cfg.sampler.alpha, val.fs)
    total, count = 0.0, 0
    model.eval()
    with torch.no_grad():
        for idx in _batches(len(val), pc.batch):
            x = val.data[idx]
            views = [as_tensor(augment_batch(x, augsched.sample_plan(uniform, rng, cfg.sampler.max_ops), rng))
                     for _ in range(pc.n_views)]
            if len(idx) < 2:
                continue
            loss, _ = view_loss(model, views, pc.tau, pc.cross_branch)
            total += loss.item() * len(idx)
            count += len(idx)
    model.train()
    return total / max(count, 1)


def pretrain(unlabeled: EpochSet, config: Optional[RunConfig] = None, model: Optional[TFEncoder] = None,
             val: Optional[EpochSet] = None, log_fn: LogFn = None) -> PretrainResult:
    """Self-supervised multi-view contrastive training on unlabeled epochs.

    A subject-disjoint validation split (``pretrain.val_fraction``) drives
    early stopping; the best-validation weights are returned.
    """
    cfg = (config or RunConfig()).validate()
    pc = cfg.pretrain
    if len(unlabeled) == 0:
        raise ValueError("empty pre-training set")
    rng = np.random.default_rng(cfg.seed)
    if val is None and pc.val_fraction > 0 and len(np.unique(unlabeled.subject_ids)) > 1:
        pool = EpochSet(unlabeled.data, unlabeled.fs, unlabeled.subject_ids, unlabeled.channel_names)
        train, val = subject_split(pool, pc.val_fraction, rng)
    else:
        train = unlabeled
    if val is not None:
        check_disjoint(train, val)
    model = model or build_model(unlabeled.n_channels, cfg)
    torch.manual_seed(cfg.seed)
    params = dict(model.named_parameters())
    moments = AdamMoments()
    sampler = _sampler(cfg, cfg.sampler.alpha, unlabeled.fs)
    n_batches = math.ceil(len(train) / pc.batch)
    best, best_state, wait = math.inf, None, 0
    result = PretrainResult(model, sampler=sampler)
    model.train()
    for epoch in range(pc.epochs):
        losses = []
        for b, idx in enumerate(_batches(len(train), pc.batch, rng)):
            if len(idx) < 2:
                continue
            lr = cosine_warm_restarts(epoch + b / n_batches, pc.t0, pc.mult, pc.lr, pc.lr_min)
            x = train.data[idx]
            plans = [augsched.sample_plan(sampler, rng, cfg.sampler.max_ops) for _ in range(pc.n_views)]
            views = [as_tensor(augment_batch(x, plan, rng)) for plan in plans]
            loss, _ = view_loss(model, views, pc.tau, pc.cross_branch)
            _finite(loss, f"pre-training epoch {epoch} batch {b}")
            model.zero_grad(set_to_none=True)
            loss.backward()
            grads = {n: p.grad for n, p in params.items() if p.grad is not None}
            adamw_step(params, grads, moments, lr, pc.weight_decay)
            losses.append(loss.item())
            z = tf_projection(model, as_tensor(x))
            for plan, v in zip(plans, views):
                ok = augsched.mean_cosine(z, tf_projection(model, v)) > sampler.threshold
                augsched.record(sampler, plan, ok)
        snap = augsched.end_epoch(sampler, epoch)
        val_loss = _val_loss(model, val, cfg) if val is not None and len(val) >= 2 else float(np.mean(losses))
        entry = {"phase": "pretrain", "epoch": epoch, "train_loss": float(np.mean(losses)),
                 "val_loss": val_loss, "lr": lr, "success_rate": snap["success_rate"],
                 "probability": snap["probability"]}
        result.history.append(entry)
        if log_fn:
            log_fn(entry)
        log.info("pretrain epoch %d loss %.4f val %.4f", epoch, entry["train_loss"], val_loss)
        if val_loss < best - pc.min_delta:
            best, wait, result.best_epoch = val_loss, 0, epoch
            best_state = copy.deepcopy(model.state_dict())
        else:
            wait += 1
            if wait >= pc.patience:
                result.stopped_early = True
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


# ---------------------------------------------------------------------------
# fine-tuning


@dataclass
class FinetuneResult:
    model: TFEncoder
    history: List[Dict] = field(default_factory=list)
    sampler: Optional[augsched.SamplerState] = None
    swa_count: int = 0
    val_metrics: Optional[Metrics] = None


def finetune_units(model: TFEncoder) -> Dict[str, int]:
    """Parameter name -> layer depth (1..L) for the fine-tuned units."""
    depth = {}
    for l, (prefix, module) in enumerate(model.layer_units(), start=1):
        for name, _ in module.named_parameters():
            depth[f"{prefix}.{name}"] = l
    return depth


@torch.no_grad()
def predict_logits(model: TFEncoder, x: np.ndarray, batch: int = 64) -> np.ndarray:
    was = model.training
    model.eval()
    out = [model.logits(as_tensor(x[i:i + batch])).numpy() for i in range(0, len(x), batch)]
    model.train(was)
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.float32)


def evaluate(model: TFEncoder, test: EpochSet, smoothing: float = 0.0) -> Metrics:
    if len(test) == 0:
        raise ValueError("empty test set")
    if test.labels is None:
        raise ValueError("labels required for evaluation")
    logits = predict_logits(model, test.data)
    loss = float(smoothed_ce(torch.from_numpy(logits).double(), torch.from_numpy(test.labels), smoothing))
    return binary_metrics(logits.argmax(1), test.labels, loss)


def _set_trainable(model: TFEncoder, depth: Dict[str, int], active: set):
    params = dict(model.named_parameters())
    for name, p in params.items():
        p.requires_grad_(name in depth and depth[name] in active)
    model.train()
    for l, (_, module) in enumerate(model.layer_units(), start=1):
        if l not in active:
            module.eval()


def finetune(pretrained: TFEncoder, labeled: EpochSet, config: Optional[RunConfig] = None,
             val: Optional[EpochSet] = None, log_fn: LogFn = None) -> FinetuneResult:
    """Supervised adaptation of the joint branch plus classifier.

    Top-down unfreezing with depth-decayed learning rates, label-smoothed
    cross-entropy, decoupled weight decay, Lookahead over AdamW, dynamically
    sampled augmentation judged by batch accuracy and SWA over the final
    part of training.  Returns the SWA model.
    """
    cfg = (config or RunConfig()).validate()
    fc = cfg.finetune
    if labeled.labels is None or len(labeled) == 0:
        raise ValueError("labeled set required")
    if len(np.unique(labeled.labels)) < 2:
        raise ValueError("labeled subset contains a single class")
    if val is not None:
        check_disjoint(labeled, val)
    rng = np.random.default_rng([cfg.seed, 0xF1])
    torch.manual_seed(cfg.seed)
    model = copy.deepcopy(pretrained)
    depth = finetune_units(model)
    n_layers = max(depth.values())
    all_params = dict(model.named_parameters())
    state = TrainState({n: all_params[n].data for n in depth}, k=fc.lookahead_k, slow_rate=fc.lookahead_rate)
    lrs = {n: layer_lr(fc.lr, fc.layer_decay, n_layers, d) for n, d in depth.items()}
    sampler = _sampler(cfg, cfg.sampler.beta, labeled.fs)
    swa_start = fc.epochs - max(1, math.ceil(fc.swa_fraction * fc.epochs))
    y_all = labeled.labels
    result = FinetuneResult(model, sampler=sampler)
    for epoch in range(fc.epochs):
        stage = stage_at(epoch, fc.epochs, n_layers, fc.unfreeze_every)
        state.stage = stage
        active = unfrozen_set(n_layers, stage)
        frozen = {n for n, d in depth.items() if d not in active}
        _set_trainable(model, depth, active)
        losses, correct = [], []
        for idx in _batches(len(labeled), fc.batch, rng):
            x, y = labeled.data[idx], y_all[idx]
            plan = augsched.sample_plan(sampler, rng, cfg.sampler.max_ops)
            x_aug = augment_batch(x, plan, rng)
            n_aug = len(idx)
            if fc.include_clean:
                x_in, y_in = np.concatenate([x_aug, x]), np.concatenate([y, y])
            else:
                x_in, y_in = x_aug, y
            logits = model.logits(as_tensor(x_in))
            loss = smoothed_ce(logits, torch.from_numpy(y_in), fc.smoothing)
            _finite(loss, f"fine-tuning epoch {epoch}")
            model.zero_grad(set_to_none=True)
            loss.backward()
            grads = {n: all_params[n].grad for n in depth
                     if n not in frozen and all_params[n].grad is not None}
            lookahead_step(state, grads, lrs, fc.weight_decay, frozen)
            preds = logits[:n_aug].argmax(1).numpy()
            augsched.record(sampler, plan, augsched.judge_finetune(preds, y, sampler.threshold))
            losses.append(loss.item())
            correct.append(float((preds == y).mean()))
        snap = augsched.end_epoch(sampler, epoch)
        if epoch >= swa_start and (fc.epochs - 1 - epoch) % fc.swa_every == 0:
            swa_update(state)
        entry = {"phase": "finetune", "epoch": epoch, "train_loss": float(np.mean(losses)),
                 "aug_accuracy": float(np.mean(correct)), "stage": stage, "lr": fc.lr,
                 "success_rate": snap["success_rate"], "probability": snap["probability"]}
        if val is not None and len(val) and (epoch + 1) % fc.eval_every == 0:
            entry["val"] = evaluate(model, val, fc.smoothing).as_dict()
        result.history.append(entry)
        if log_fn:
            log_fn(entry)
    for p in model.parameters():
        p.requires_grad_(True)
    if state.swa_count:
        batches = [as_tensor(labeled.data[idx]) for idx in _batches(len(labeled), fc.batch)]
        swa_finalize(state, model, batches, forward=model.logits, scope=model.tf)
    result.swa_count = state.swa_count
    model.eval()
    if val is not None and len(val):
        result.val_metrics = evaluate(model, val, fc.smoothing)
    return result
