"""Command-line entry point: ``mclpd <command> [options]``.

Every command writes ``<out>.manifest.json`` holding the resolved config,
the seed and sha256 digests of its inputs.  Training commands also write
JSON-lines logs to ``<out>.log.jsonl``, which ``report`` turns into CSVs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io as _io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .io import (CorruptFileError, IngestError, load_checkpoint, load_state,
                 read_epochs, save_checkpoint, write_epochs)
from .optim import NonFiniteError
from .pipeline import SubjectLeakError
from .signal import EpochSet

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_CORRUPT = 4
EXIT_CONFIG = 5
EXIT_DATA = 6
EXIT_NONFINITE = 7

log = logging.getLogger("mclpd")


class DataError(ValueError):
    """Input data is valid on disk but unusable for the requested command."""


def _apply_threads():
    value = os.environ.get("MCLPD_THREADS")
    if not value:
        return
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"MCLPD_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError("MCLPD_THREADS must be >= 1")
    import torch

    torch.set_num_threads(n)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")


def _sidecar(out, suffix: str) -> Path:
    return Path(str(out) + suffix)


def write_manifest(out, command: str, cfg: Optional[RunConfig], seed: Optional[int],
                   inputs: Sequence, overrides: Sequence[str] = (), extra: Optional[Dict] = None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": cfg.to_dict() if cfg is not None else None,
        "config_hash": cfg.hash() if cfg is not None else None,
        "overrides": list(overrides),
        "inputs": {str(p): sha256_file(p) for p in inputs},
    }
    manifest.update(extra or {})
    path = _sidecar(out, ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


class JsonLog:
    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w")

    def __call__(self, entry: Dict):
        self._fh.write(json.dumps(entry, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def _resolve_config(args) -> tuple:
    cfg, overrides = load_config(args.config)
    if args.seed is not None:
        if args.seed != cfg.seed:
            overrides.append("seed")
        cfg.seed = args.seed
    if getattr(args, "label_fraction", None) is not None:
        if args.label_fraction != cfg.finetune.label_fraction:
            overrides.append("finetune.label_fraction")
        cfg.finetune.label_fraction = args.label_fraction
    return cfg.validate(), overrides


def _load_model(path, cfg: Optional[RunConfig] = None):
    from .encoder import TFEncoder

    _require(path)
    tensors, manifest = load_checkpoint(path, cfg.hash() if cfg is not None else None)
    try:
        arch = manifest["model"]
        model = TFEncoder(arch["n_channels"], tuple(arch["widths"]), tuple(arch["kernels"]), arch["proj_dim"])
        load_state(model, tensors)
    except (KeyError, RuntimeError) as exc:
        raise CorruptFileError(f"{path}: checkpoint does not describe a model ({exc})") from None
    model.eval()
    return model, manifest


def _model_meta(model, cfg: RunConfig) -> Dict:
    return {"n_channels": model.n_channels, "widths": list(cfg.model.widths),
            "kernels": list(cfg.model.kernels), "proj_dim": cfg.model.proj_dim}


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    from .synth import SITES, SynthSpec, generate

    site = SITES["siteA"] if args.spec == "default" else SITES[args.spec]
    spec = SynthSpec(n_subjects_per_class=args.subjects, epochs_per_subject=args.epochs_per_subject,
                     beta_multiplier=args.multiplier, site=site, subject_offset=args.subject_offset,
                     seed=args.seed or 0)
    es = generate(spec, preprocess=not args.raw)
    write_epochs(args.out, es)
    write_manifest(args.out, "synth", None, spec.seed, [],
                   extra={"spec": {"site": site.name, "subjects_per_class": spec.n_subjects_per_class,
                                   "epochs_per_subject": spec.epochs_per_subject,
                                   "beta_multiplier": spec.beta_multiplier,
                                   "subject_offset": spec.subject_offset, "preprocessed": not args.raw}})
    print(f"wrote {es.n_epochs} epochs to {args.out}")
    return EXIT_OK


def _channel_list(value: str) -> List[str]:
    p = Path(value)
    text = p.read_text() if p.is_file() else value
    return [c.strip() for c in text.replace("\n", ",").split(",") if c.strip()]


def cmd_preprocess(args) -> int:
    import yaml

    from .io import ingest_csv

    _require(*args.data)
    channels = _channel_list(args.channels)
    channel_map = None
    if args.channel_map:
        _require(args.channel_map)
        channel_map = yaml.safe_load(Path(args.channel_map).read_text()) or {}
        if not isinstance(channel_map, dict):
            raise ConfigError("channel map must be a mapping of CSV header -> channel name")
    labels = [int(v) for v in args.labels.split(",")] if args.labels else None
    if labels is not None and len(labels) != len(args.data):
        raise DataError("--labels needs one label per input file")
    es = ingest_csv(args.data, channels, args.fs, cpz=args.cpz, channel_map=channel_map, labels=labels)
    write_epochs(args.out, es)
    write_manifest(args.out, "preprocess", None, None, args.data,
                   extra={"channels": channels, "cpz": args.cpz, "fs": args.fs})
    print(f"wrote {es.n_epochs} epochs to {args.out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    from .pipeline import pretrain

    cfg, overrides = _resolve_config(args)
    _require(args.data)
    es = read_epochs(args.data)
    if es.n_epochs == 0:
        raise DataError(f"{args.data} holds no epochs")
    logger = JsonLog(_sidecar(args.out, ".log.jsonl"))
    try:
        # labels, if any, are deliberately dropped
        unlabeled = EpochSet(es.data, es.fs, es.subject_ids, es.channel_names)
        result = pretrain(unlabeled, cfg, log_fn=logger)
    finally:
        logger.close()
    final = result.history[-1] if result.history else {}
    meta = {"config_hash": cfg.hash(), "seed": cfg.seed, "epoch": result.best_epoch, "phase": "pretrain",
            "metrics": {"val_loss": final.get("val_loss"), "train_loss": final.get("train_loss")},
            "model": _model_meta(result.model, cfg)}
    save_checkpoint(args.out, result.model, meta)
    write_manifest(args.out, "pretrain", cfg, cfg.seed, [args.data], overrides)
    print(f"pre-trained {len(result.history)} epochs; checkpoint {args.out}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    from .pipeline import build_model, evaluate, finetune, transfer_splits

    cfg, overrides = _resolve_config(args)
    _require(args.data)
    es = read_epochs(args.data)
    if es.labels is None:
        raise DataError(f"{args.data} has no labels")
    if args.model:
        model, _ = _load_model(args.model, cfg)
    else:
        model = build_model(es.n_channels, cfg)
    if model.n_channels != es.n_channels:
        raise DataError(f"model expects {model.n_channels} channels, data has {es.n_channels}")
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    labeled, val, test = transfer_splits(es, cfg, rng)
    logger = JsonLog(_sidecar(args.out, ".log.jsonl"))
    try:
        result = finetune(model, labeled, cfg, val=val, log_fn=logger)
        metrics = evaluate(result.model, test)
        logger({"phase": "test", **metrics.as_dict()})
    finally:
        logger.close()
    test_path = _sidecar(args.out, ".test.mclp")
    write_epochs(test_path, test)
    meta = {"config_hash": cfg.hash(), "seed": cfg.seed, "epoch": cfg.finetune.epochs - 1, "phase": "finetune",
            "metrics": metrics.as_dict(), "model": _model_meta(result.model, cfg),
            "n_labeled": len(labeled)}
    save_checkpoint(args.out, result.model, meta)
    inputs = [args.data] + ([args.model] if args.model else [])
    write_manifest(args.out, "finetune", cfg, cfg.seed, inputs, overrides,
                   extra={"test_data": str(test_path), "metrics": metrics.as_dict()})
    print(json.dumps(metrics.as_dict(), sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .pipeline import evaluate

    _require(args.data, args.model)
    model, _ = _load_model(args.model)
    es = read_epochs(args.data)
    if es.labels is None:
        raise DataError(f"{args.data} has no labels")
    metrics = evaluate(model, es).as_dict()
    text = json.dumps(metrics, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        write_manifest(args.out, "evaluate", None, None, [args.data, args.model])
    print(text, end="")
    return EXIT_OK


def cmd_explain(args) -> int:
    from .interpret import explain

    _require(args.data, args.model)
    model, _ = _load_model(args.model)
    es = read_epochs(args.data)
    if es.labels is None:
        raise DataError(f"{args.data} has no labels")
    report = explain(model, es)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for dim in ("band", "channel", "window"):
        (out / f"{dim}_importance.csv").write_text(report.to_csv(dim))
        (out / f"{dim}_importance.svg").write_text(report.to_svg(dim))
    write_manifest(out / "explain", "explain", None, None, [args.data, args.model],
                   extra={"baseline_accuracy": report.baseline_accuracy})
    print(f"baseline accuracy {report.baseline_accuracy:.4f}; top band {report.ranking('band')[0]}, "
          f"top channel {report.ranking('channel')[0]}")
    return EXIT_OK


def read_log(path) -> List[Dict]:
    entries = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorruptFileError(f"{path}: line {line_no}: {exc.msg}") from None
    return entries


def report_tables(entries: Sequence[Dict]) -> Dict[str, str]:
    """CSV text for the loss curve and the per-operator sampler history."""
    from .augsched import history_csv

    loss = _io.StringIO()
    writer = csv.writer(loss, lineterminator="\n")
    writer.writerow(["phase", "epoch", "train_loss", "val_loss", "lr"])
    history = []
    for e in entries:
        if "epoch" not in e:
            continue
        writer.writerow([e.get("phase", ""), e["epoch"], repr(e.get("train_loss")),
                         "" if e.get("val_loss") is None else repr(e["val_loss"]), repr(e.get("lr"))])
        if "success_rate" in e:
            history.append({"epoch": e["epoch"], "success_rate": e["success_rate"],
                            "probability": e.get("probability", {})})
    return {"loss_curve.csv": loss.getvalue(), "success_rates.csv": history_csv(history)}


def cmd_report(args) -> int:
    _require(args.data)
    tables = report_tables(read_log(args.data))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in tables.items():
        (out / name).write_text(text)
    print(f"wrote {', '.join(sorted(tables))} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mclpd", description="Contrastive EEG pre-training and fine-tuning.")
    parser.add_argument("--version", action="version", version=f"mclpd {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, model=False, config=False, out_required=True):
        if data:
            p.add_argument("--data", required=True, help="input container")
        if model:
            p.add_argument("--model", help="checkpoint file")
        if config:
            p.add_argument("--config", help="YAML run configuration")
            p.add_argument("--seed", type=int)
        p.add_argument("--out", required=out_required)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", default="default", choices=["default", "siteA", "siteB", "siteC"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=10, help="subjects per class")
    p.add_argument("--epochs-per-subject", type=int, default=10)
    p.add_argument("--multiplier", type=float, default=2.0, help="class-1 beta power multiplier")
    p.add_argument("--subject-offset", type=int, default=0)
    p.add_argument("--raw", action="store_true", help="skip filtering and z-scoring")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="ingest raw CSV exports (one per subject)")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--channels", required=True, help="comma list or file of channel names")
    p.add_argument("--channel-map", help="YAML mapping CSV header -> channel name")
    p.add_argument("--cpz", default="CPz")
    p.add_argument("--fs", type=float, default=500.0)
    p.add_argument("--labels", help="comma list, one label per file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("pretrain", help="contrastive pre-training on unlabeled epochs")
    common(p, config=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune on a labeled site")
    common(p, model=True, config=True)
    p.add_argument("--label-fraction", type=float)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="binary metrics on a labeled container")
    common(p, model=True, out_required=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="band, channel and window occlusion importance")
    common(p, model=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("report", help="CSV tables from a JSON-lines training log")
    p.add_argument("--data", required=True, help="log file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


_EXIT_CODES = [
    (FileNotFoundError, EXIT_MISSING),
    (CorruptFileError, EXIT_CORRUPT),
    (ConfigError, EXIT_CONFIG),
    (NonFiniteError, EXIT_NONFINITE),
    (IngestError, EXIT_DATA),
    (DataError, EXIT_DATA),
    (SubjectLeakError, EXIT_DATA),
]


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        _apply_threads()
        if getattr(args, "model", None) is not None:
            _require(args.model)
        return args.func(args)
    except Exception as exc:
        for kind, code in _EXIT_CODES:
            if isinstance(exc, kind):
                print(f"mclpd {args.command}: {exc}", file=sys.stderr)
                return code
        if isinstance(exc, ValueError):
            print(f"mclpd {args.command}: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise


if __name__ == "__main__":
    sys.exit(main())
