"""Run configuration with defaults from the reference training protocol."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class PretrainConfig:
    epochs: int = 30
    batch: int = 32
    lr: float = 1e-4
    lr_min: float = 0.0
    weight_decay: float = 1e-4
    tau: float = 0.1
    patience: int = 10
    min_delta: float = 1e-4
    t0: int = 10
    mult: int = 2
    val_fraction: float = 0.1
    n_views: int = 2
    cross_branch: bool = False


@dataclass
class FinetuneConfig:
    epochs: int = 300
    batch: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    smoothing: float = 0.1
    label_fraction: float = 0.05
    val_fraction: float = 0.5
    test_fraction: float = 0.3
    layer_decay: float = 0.65
    unfreeze_every: Optional[int] = None
    lookahead_k: int = 5
    lookahead_rate: float = 0.5
    swa_fraction: float = 0.25
    swa_every: int = 5
    include_clean: bool = True
    eval_every: int = 10


@dataclass
class SamplerConfig:
    temperature: float = 1.0
    decay: float = 1.0
    alpha: float = 0.5
    beta: float = 0.5
    max_ops: int = 3


@dataclass
class ModelConfig:
    widths: Tuple[int, ...] = (32, 64, 128)
    kernels: Tuple[int, ...] = (7, 5, 3)
    proj_dim: int = 64


@dataclass
class RunConfig:
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0

    def validate(self) -> "RunConfig":
        ft, pt, sm = self.finetune, self.pretrain, self.sampler
        if not 0 < ft.label_fraction <= 1:
            raise ConfigError("finetune.label_fraction must lie in (0, 1]")
        if not 0 <= ft.val_fraction < 1 or not 0 < ft.test_fraction < 1:
            raise ConfigError("finetune.val_fraction must lie in [0, 1) and test_fraction in (0, 1)")
        if not 0 <= ft.smoothing < 1:
            raise ConfigError("finetune.smoothing must lie in [0, 1)")
        if not 0 < ft.layer_decay <= 1:
            raise ConfigError("finetune.layer_decay must lie in (0, 1]")
        if sm.temperature <= 0:
            raise ConfigError("sampler.temperature must be positive")
        if pt.tau <= 0:
            raise ConfigError("pretrain.tau must be positive")
        if pt.n_views < 2:
            raise ConfigError("pretrain.n_views must be >= 2")
        for name, value in (("pretrain.epochs", pt.epochs), ("finetune.epochs", ft.epochs),
                            ("pretrain.batch", pt.batch), ("finetune.batch", ft.batch)):
            if value < 1:
                raise ConfigError(f"{name} must be >= 1")
        return self

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["model"]["widths"] = list(self.model.widths)
        d["model"]["kernels"] = list(self.model.kernels)
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> Tuple["RunConfig", List[str]]:
        """Build a config from a (partial) mapping; returns it with the list of overridden keys."""
        cfg = cls()
        overrides: List[str] = []
        for key, value in (data or {}).items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config section {key!r}")
            current = getattr(cfg, key)
            if is_dataclass(current):
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be a mapping")
                names = {f.name: f for f in fields(current)}
                for sub, v in value.items():
                    if sub not in names:
                        raise ConfigError(f"unknown key {key}.{sub}")
                    default = getattr(current, sub)
                    if isinstance(default, tuple):
                        v = tuple(v)
                    elif isinstance(default, bool):
                        v = bool(v)
                    elif isinstance(default, float) and isinstance(v, (int, float)):
                        v = float(v)
                    elif isinstance(default, int) and not isinstance(v, int):
                        raise ConfigError(f"{key}.{sub} must be an integer")
                    if v != default:
                        overrides.append(f"{key}.{sub}")
                    setattr(current, sub, v)
            else:
                if value != current:
                    overrides.append(key)
                setattr(cfg, key, value)
        return cfg.validate(), overrides


def load_config(path: Optional[str]) -> Tuple[RunConfig, List[str]]:
    if path is None:
        return RunConfig().validate(), []
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return RunConfig.from_dict(data)


def desk_config(seed: int = 0) -> RunConfig:
    """Reduced epoch budgets for single-CPU runs; every other value stays at its default."""
    cfg = RunConfig(seed=seed)
    cfg.pretrain.epochs = 3
    cfg.finetune.epochs = 60
    return cfg
