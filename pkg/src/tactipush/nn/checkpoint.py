"""Versioned checkpoint blobs: named float tensors plus a JSON header."""
from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from ..errors import ValidationError

FORMAT = "tactipush-ckpt"
VERSION = 1


class CheckpointMismatch(ValidationError):
    pass


def save(path, tensors: dict, *, kind: str, config_hash: str, extra=None):
    header = {"format": FORMAT, "version": VERSION, "kind": kind, "config_hash": config_hash,
              "extra": extra or {}}
    arrays = {f"p/{k}": np.asarray(v, dtype="<f8") for k, v in tensors.items()}
    arrays["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load(path, *, kind=None, config_hash=None):
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(bytes(z["__header__"]).decode())
            tensors = {k[2:]: z[k].copy() for k in z.files if k.startswith("p/")}
    except (OSError, KeyError, ValueError) as exc:
        raise ValidationError(f"cannot read checkpoint {path}: {exc}") from exc
    if header.get("format") != FORMAT or header.get("version") != VERSION:
        raise CheckpointMismatch(f"{path}: unsupported checkpoint format {header.get('format')} v{header.get('version')}")
    if kind is not None and header["kind"] != kind:
        raise CheckpointMismatch(f"{path}: expected a {kind} checkpoint, found {header['kind']}")
    if config_hash is not None and header["config_hash"] != config_hash:
        raise CheckpointMismatch(
            f"{path}: config hash {header['config_hash'][:12]} does not match {config_hash[:12]}")
    return tensors, header
