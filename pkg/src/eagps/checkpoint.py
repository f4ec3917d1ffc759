"""Binary checkpoints.

Layout: the magic ``EAGPS1``; one text record (u32 length + UTF-8 ``key=value``
lines holding the config and ``meta.*`` entries); then records of
``u32 name length, name, u32 rows, u32 cols, rows*cols little-endian float64``
until end of file. Adam moments are stored as ``adam_m/<name>`` and
``adam_v/<name>`` records so training can resume exactly.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .config import HyperConfig
from .errors import CheckpointError, ConfigError
from .numerics import ParamStore
from .trainer import Model, param_shapes

MAGIC = b"EAGPS1"
META_KEYS = ("m_items", "n_users", "max_len", "step", "epoch")


def _record(name: str, value: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    rows, cols = value.shape
    return (struct.pack("<I", len(raw)) + raw + struct.pack("<II", rows, cols)
            + np.ascontiguousarray(value, dtype="<f8").tobytes())


def save_checkpoint(model: Model, path) -> None:
    meta = {"m_items": model.m_items, "n_users": model.n_users, "max_len": model.max_len,
            "step": model.store.step, "epoch": model.epoch}
    text = model.hyper.to_text() + "".join(f"meta.{k}={v}\n" for k, v in meta.items())
    blob = text.encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(blob)), blob]
    store = model.store
    for name in store.names():
        parts.append(_record(name, store.values[name]))
    for name in store.names():
        parts.append(_record(f"adam_m/{name}", store.m[name]))
        parts.append(_record(f"adam_v/{name}", store.v[name]))
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> tuple[HyperConfig, dict, dict]:
    """Return (config, meta, {name: array}) without any shape validation."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not data.startswith(MAGIC):
        raise CheckpointError("bad checkpoint magic")
    pos = len(MAGIC)
    try:
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        text = data[pos:pos + n].decode("utf-8")
        pos += n
        tensors = {}
        while pos < len(data):
            (k,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + k].decode("utf-8")
            pos += k
            rows, cols = struct.unpack_from("<II", data, pos)
            pos += 8
            size = rows * cols * 8
            if pos + size > len(data):
                raise CheckpointError(f"truncated tensor {name!r}")
            tensors[name] = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).copy()
            pos += size
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    cfg_lines, meta = [], {}
    for line in text.splitlines():
        if line.startswith("meta."):
            key, value = line[5:].split("=", 1)
            meta[key] = int(value)
        else:
            cfg_lines.append(line)
    try:
        hyper = HyperConfig.from_text("\n".join(cfg_lines))
    except ConfigError as exc:
        raise CheckpointError(f"checkpoint config invalid: {exc}") from exc
    return hyper, meta, tensors


def load_checkpoint(path, train) -> Model:
    """Rebuild a model over ``train`` and check every tensor against the config's shapes."""
    hyper, meta, tensors = read_checkpoint(path)
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise CheckpointError(f"checkpoint lacks metadata {missing}")
    expected = param_shapes(hyper, meta["m_items"], meta["n_users"], meta["max_len"])
    store = ParamStore()
    for name, shape in expected.items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint lacks parameter {name!r}")
        if tensors[name].shape != shape:
            raise CheckpointError(f"parameter {name!r} has shape {tensors[name].shape}, config expects {shape}")
        store.add(name, tensors[name])
        for kind, buf in (("adam_m", store.m), ("adam_v", store.v)):
            moment = tensors.get(f"{kind}/{name}")
            if moment is not None:
                if moment.shape != shape:
                    raise CheckpointError(f"{kind}/{name} has shape {moment.shape}")
                buf[name][...] = moment
    extra = set(tensors) - set(expected) - {f"adam_{k}/{n}" for n in expected for k in "mv"}
    if extra:
        raise CheckpointError(f"unexpected tensors in checkpoint: {sorted(extra)}")
    store.step = meta["step"]
    model = Model(hyper, train, meta["m_items"], meta["n_users"], meta["max_len"], store=store)
    if model.max_len != meta["max_len"]:
        raise CheckpointError("training data is longer than the checkpoint's prompt table")
    model.epoch = meta["epoch"]
    return model
