"""Dynamic augmentation manager.

Operators are drawn with probability ``softmax(s / T)`` where ``s_i`` is the
empirical success rate of operator ``i``.  Each sampled combination is
judged once (embedding agreement during pre-training, batch accuracy during
fine-tuning) and every operator in it shares the verdict.
"""
from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .augment import AugKind, AugOp, default_ops

PRIOR_SCORE = 0.5


@dataclass
class SamplerState:
    ops: List[AugOp] = field(default_factory=default_ops)
    temperature: float = 1.0
    threshold: float = 0.5
    decay: float = 1.0
    min_temperature: float = 1e-3
    n_success: np.ndarray = None
    n_total: np.ndarray = None
    history: List[Dict] = field(default_factory=list)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        k = len(self.ops)
        if k < 1:
            raise ValueError("need at least one operator")
        if self.n_success is None:
            self.n_success = np.zeros(k, dtype=np.int64)
        if self.n_total is None:
            self.n_total = np.zeros(k, dtype=np.int64)
        self._lock = threading.Lock()

    @property
    def kinds(self) -> List[AugKind]:
        return [op.kind for op in self.ops]

    def index(self, kind) -> int:
        return self.kinds.index(AugKind(kind))

    def counts(self):
        """Consistent ``(n_success, n_total)`` snapshot."""
        with self._lock:
            return self.n_success.copy(), self.n_total.copy()


def success_scores(state: SamplerState) -> np.ndarray:
    succ, total = state.counts()
    scores = np.full(len(total), PRIOR_SCORE)
    seen = total > 0
    scores[seen] = succ[seen] / total[seen]
    return scores


def success_score(state: SamplerState, i: int) -> float:
    return float(success_scores(state)[i])


def softmax(scores, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(scores, dtype=np.float64) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def probabilities(state: SamplerState) -> np.ndarray:
    return softmax(success_scores(state), state.temperature)


def sample_plan(state: SamplerState, rng: np.random.Generator, max_ops: int = 3) -> List[AugOp]:
    """Draw a combo size uniformly from ``1..max_ops`` then distinct operators.

    Operators are drawn sequentially without replacement, each draw
    renormalizing the remaining probabilities.
    """
    k = len(state.ops)
    p = probabilities(state)
    size = int(rng.integers(1, min(max_ops, k) + 1))
    avail = np.ones(k, dtype=bool)
    chosen = []
    for _ in range(size):
        q = np.where(avail, p, 0.0)
        i = int(rng.choice(k, p=q / q.sum()))
        avail[i] = False
        chosen.append(i)
    return [state.ops[i] for i in chosen]


def judge_pretrain(z, z_aug, alpha: float = 0.5) -> bool:
    """Success iff ``cos(z, z_aug) > alpha``; zero-norm vectors fail."""
    z = np.asarray(z, dtype=np.float64).ravel()
    z_aug = np.asarray(z_aug, dtype=np.float64).ravel()
    nz, na = np.linalg.norm(z), np.linalg.norm(z_aug)
    if nz == 0 or na == 0:
        return False
    return bool(z @ z_aug / (nz * na) > alpha)


def mean_cosine(z, z_aug) -> float:
    """Row-wise cosine similarity averaged over a batch; zero rows count as 0."""
    z = np.asarray(z, dtype=np.float64)
    z_aug = np.asarray(z_aug, dtype=np.float64)
    num = (z * z_aug).sum(-1)
    den = np.linalg.norm(z, axis=-1) * np.linalg.norm(z_aug, axis=-1)
    cos = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(cos.mean())


def judge_finetune(preds, targets, beta: float = 0.5) -> bool:
    """Success iff batch accuracy exceeds ``beta``; an empty batch fails."""
    preds = np.asarray(preds).ravel()
    targets = np.asarray(targets).ravel()
    if preds.shape != targets.shape:
        raise ValueError("preds and targets must have equal length")
    if preds.size == 0:
        return False
    return bool((preds == targets).mean() > beta)


def record(state: SamplerState, plan: Sequence[AugOp], success: bool) -> SamplerState:
    idx = [state.index(op.kind) for op in plan]
    with state._lock:
        for i in idx:
            state.n_total[i] += 1
            if success:
                state.n_success[i] += 1
    return state


def end_epoch(state: SamplerState, epoch: int) -> Dict:
    """Snapshot per-operator success rates and probabilities, then decay T."""
    scores = success_scores(state)
    probs = probabilities(state)
    snap = {
        "epoch": int(epoch),
        "success_rate": {k.value: float(s) for k, s in zip(state.kinds, scores)},
        "probability": {k.value: float(p) for k, p in zip(state.kinds, probs)},
        "temperature": state.temperature,
    }
    state.history.append(snap)
    if state.decay != 1.0:
        state.temperature = max(state.temperature * state.decay, state.min_temperature)
    return snap


def history_csv(history: Sequence[Dict], out: Optional[io.TextIOBase] = None) -> str:
    """Render history as ``epoch,operator,success_rate,probability`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "operator", "success_rate", "probability"])
    for snap in history:
        for op, rate in snap["success_rate"].items():
            w.writerow([snap["epoch"], op, f"{rate:.6f}", f"{snap['probability'][op]:.6f}"])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text
