"""Multi-view contrastive pre-training and few-label fine-tuning for EEG."""

__version__ = "0.1.0"

from .augment import AugKind, AugOp, compose, replay  # noqa: E402
from .config import RunConfig, desk_config, load_config  # noqa: E402
from .encoder import TFEncoder  # noqa: E402
from .estimators import ContrastivePretrainer, MCLPDClassifier  # noqa: E402
from .pipeline import evaluate, finetune, pretrain  # noqa: E402
from .signal import EpochSet  # noqa: E402
from .synth import SynthSpec, generate  # noqa: E402

__all__ = [
    "AugKind", "AugOp", "ContrastivePretrainer", "EpochSet", "MCLPDClassifier", "RunConfig",
    "SynthSpec", "TFEncoder", "compose", "desk_config", "evaluate", "finetune", "generate",
    "load_config", "pretrain", "replay",
]
