"""Binary epoch container, checkpoint files and raw CSV ingestion."""
from __future__ import annotations

import csv
import json
import os
import struct
import warnings
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .signal import EpochSet, bandpass, epoch_split, zscore

MAGIC = b"MCLP"
VERSION = 1
_HEADER = struct.Struct("<4sHIHIfB")
FLAG_LABELS = 0x01

CKPT_MAGIC = b"MCKP"
CKPT_VERSION = 1

PathLike = Union[str, os.PathLike]


class CorruptFileError(ValueError):
    """A file is truncated, oversized or has an invalid header."""


class IngestError(ValueError):
    """A raw CSV export could not be turned into epochs."""


class ConfigHashWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# epoch container


def encode_epochs(es: EpochSet) -> bytes:
    n, c, t = es.data.shape
    if n >= 2**32 or c >= 2**16 or t >= 2**32:
        raise ValueError("EpochSet too large for the container header")
    flags = FLAG_LABELS if es.labels is not None else 0
    names = es.channel_names or tuple(f"ch{i}" for i in range(c))
    out = [_HEADER.pack(MAGIC, VERSION, n, c, t, es.fs, flags)]
    for name in names:
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
    out.append(np.asarray(es.subject_ids, dtype="<u4").tobytes())
    if es.labels is not None:
        out.append(np.asarray(es.labels, dtype="u1").tobytes())
    out.append(np.ascontiguousarray(es.data, dtype="<f4").tobytes())
    return b"".join(out)


def decode_epochs(blob: bytes) -> EpochSet:
    if len(blob) < _HEADER.size:
        raise CorruptFileError(f"file shorter than the {_HEADER.size}-byte header")
    magic, version, n, c, t, fs, flags = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptFileError(f"unsupported container version {version}")
    pos = _HEADER.size
    names = []
    for _ in range(c):
        if pos + 2 > len(blob):
            raise CorruptFileError("truncated channel table")
        (length,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        if pos + length > len(blob):
            raise CorruptFileError("truncated channel table")
        try:
            names.append(blob[pos:pos + length].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise CorruptFileError(f"channel name is not UTF-8: {exc}") from None
        pos += length
    has_labels = bool(flags & FLAG_LABELS)
    expected = pos + 4 * n + (n if has_labels else 0) + 4 * n * c * t
    if len(blob) != expected:
        raise CorruptFileError(f"expected {expected} bytes from header, found {len(blob)}")
    subjects = np.frombuffer(blob, dtype="<u4", count=n, offset=pos).astype(np.int64)
    pos += 4 * n
    labels = None
    if has_labels:
        labels = np.frombuffer(blob, dtype="u1", count=n, offset=pos).astype(np.int64)
        pos += n
    data = np.frombuffer(blob, dtype="<f4", count=n * c * t, offset=pos).reshape(n, c, t).astype(np.float32)
    try:
        return EpochSet(data, float(fs), subjects, tuple(names), labels)
    except ValueError as exc:
        raise CorruptFileError(str(exc)) from None


def write_epochs(path: PathLike, es: EpochSet) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_epochs(es))


def read_epochs(path: PathLike) -> EpochSet:
    with open(path, "rb") as fh:
        return decode_epochs(fh.read())


# ---------------------------------------------------------------------------
# checkpoints


def encode_checkpoint(tensors: Mapping[str, np.ndarray], manifest: Optional[dict] = None) -> bytes:
    """Serialize named arrays plus a JSON manifest.

    Layout: magic, u16 version, u32 manifest length, manifest JSON, u32
    tensor count, then per tensor a u16-prefixed name, a u8-prefixed numpy
    dtype string, u8 ndim, u64 dims and the raw little-endian bytes.
    """
    meta = json.dumps(manifest or {}, sort_keys=True).encode("utf-8")
    out = [CKPT_MAGIC, struct.pack("<HI", CKPT_VERSION, len(meta)), meta, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw_name = name.encode("utf-8")
        dtype = arr.dtype.str.encode("ascii")
        out.append(struct.pack("<H", len(raw_name)) + raw_name)
        out.append(struct.pack("<B", len(dtype)) + dtype)
        out.append(struct.pack(f"<B{arr.ndim}Q", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def decode_checkpoint(blob: bytes) -> Tuple[Dict[str, np.ndarray], dict]:
    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CorruptFileError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    def take_bytes(n):
        nonlocal pos
        if pos + n > len(blob):
            raise CorruptFileError("truncated checkpoint")
        pos += n
        return blob[pos - n:pos]

    if blob[:4] != CKPT_MAGIC:
        raise CorruptFileError("not a checkpoint file")
    pos = 4
    version, meta_len = take("<HI")
    if version != CKPT_VERSION:
        raise CorruptFileError(f"unsupported checkpoint version {version}")
    try:
        manifest = json.loads(take_bytes(meta_len).decode("utf-8"))
    except ValueError as exc:
        raise CorruptFileError(f"bad manifest: {exc}") from None
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (n_name,) = take("<H")
        name = take_bytes(n_name).decode("utf-8")
        (n_dtype,) = take("<B")
        dtype = np.dtype(take_bytes(n_dtype).decode("ascii"))
        (ndim,) = take("<B")
        shape = take(f"<{ndim}Q") if ndim else ()
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(take_bytes(nbytes), dtype=dtype).reshape(shape).copy()
    if pos != len(blob):
        raise CorruptFileError(f"{len(blob) - pos} trailing bytes in checkpoint")
    return tensors, manifest


def save_checkpoint(path: PathLike, model_or_tensors, manifest: Optional[dict] = None) -> None:
    if hasattr(model_or_tensors, "state_dict"):
        tensors = {k: v.detach().cpu().numpy() for k, v in model_or_tensors.state_dict().items()}
    else:
        tensors = dict(model_or_tensors)
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(tensors, manifest))


def load_checkpoint(path: PathLike, expected_config_hash: Optional[str] = None):
    with open(path, "rb") as fh:
        tensors, manifest = decode_checkpoint(fh.read())
    stored = manifest.get("config_hash")
    if expected_config_hash is not None and stored != expected_config_hash:
        warnings.warn(f"checkpoint config hash {stored} differs from current {expected_config_hash}",
                      ConfigHashWarning, stacklevel=2)
    return tensors, manifest


def load_state(model, tensors: Mapping[str, np.ndarray]) -> None:
    import torch

    model.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in tensors.items()})


# ---------------------------------------------------------------------------
# raw CSV ingestion


def read_csv_record(path: PathLike, channels: Sequence[str], cpz: str = "CPz",
                    channel_map: Optional[Mapping[str, str]] = None) -> np.ndarray:
    """Return a re-referenced ``[n_channels x n_time]`` record from a CSV export.

    ``channel_map`` renames CSV headers to canonical channel names.  Rows are
    time points; every mapped channel minus the ``cpz`` column is kept.
    """
    if len(channels) < 2:
        raise IngestError("need at least 2 channels")
    rename = dict(channel_map or {})
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [rename.get(h.strip(), h.strip()) for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        if cpz not in header:
            raise IngestError(f"{path}: missing reference column {cpz!r}")
        missing = [ch for ch in channels if ch not in header]
        if missing:
            raise IngestError(f"{path}: missing channels {missing}")
        cols = [header.index(ch) for ch in channels]
        ref = header.index(cpz)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}: line {line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise IngestError(f"{path}: line {line_no}: {exc}") from None
            rows.append(values)
    if not rows:
        raise IngestError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    return (table[:, cols] - table[:, [ref]]).T


def ingest_csv(paths: Sequence[PathLike], channels: Sequence[str], fs: float, cpz: str = "CPz",
               channel_map: Optional[Mapping[str, str]] = None, labels: Optional[Sequence[int]] = None,
               dur: float = 5.0, lo: float = 1.0, hi: float = 45.0, taps: int = 501) -> EpochSet:
    """One CSV per subject: re-reference, band-pass, epoch, z-score."""
    sets = []
    for sid, path in enumerate(paths):
        record = read_csv_record(path, channels, cpz, channel_map)
        if record.shape[1] < taps:
            raise IngestError(f"{path}: record shorter than the {taps}-tap filter")
        record = bandpass(record, lo, hi, taps=taps, fs=fs)
        label = None if labels is None else int(labels[sid])
        sets.append(epoch_split(record, fs, dur, subject_id=sid, channel_names=tuple(channels), label=label))
    es = zscore(EpochSet.concatenate(sets))
    return es.with_data(es.data.astype(np.float32))
