"""Binary checkpoint format for trained models.

Layout (little-endian): magic ``SAEC``, u16 version, u32 JSON header length,
JSON descriptor (architecture, seed, parameter/state shapes, optimizer
presence), float32 parameter blob in declaration order, float32 batch-norm
running-stats blob, then an optional Adam state blob (m and v per parameter,
declaration order).

Parameters are stored as float32; models kept in float64 (used for gradient
checking) lose precision on save, so persist float32 models.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, TruncatedFile, VersionMismatch
from .arch import arch_from_json, arch_to_json
from .model import SaeModel, init_model
from .optim import AdamState

MAGIC = b"SAEC"
VERSION = 1


def save_checkpoint(model: SaeModel, path: str | Path, opt_state: AdamState | None = None) -> None:
    params = model.named_params()
    bn_state = model.named_bn_state()
    header = {
        "arch": arch_to_json(model.arch),
        "rng_seed": model.rng_seed,
        "params": [[k, list(v.shape)] for k, v in params],
        "bn_state": [[k, list(v.shape)] for k, v in bn_state],
        "has_opt_state": opt_state is not None,
        "opt_step": opt_state.step if opt_state is not None else 0,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = [MAGIC, struct.pack("<H", VERSION), struct.pack("<I", len(header_bytes)), header_bytes]
    for _, v in params:
        blobs.append(np.ascontiguousarray(v, dtype="<f4").tobytes())
    for _, v in bn_state:
        blobs.append(np.ascontiguousarray(v, dtype="<f4").tobytes())
    if opt_state is not None:
        for k, _ in params:
            blobs.append(np.ascontiguousarray(opt_state.m[k], dtype="<f4").tobytes())
        for k, _ in params:
            blobs.append(np.ascontiguousarray(opt_state.v[k], dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(blobs))


class _Cursor:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"{self.path}: expected {n} more bytes at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def array(self, shape: list[int]) -> np.ndarray:
        size = 1
        for d in shape:
            size *= int(d)
        raw = self.take(4 * size)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def load_checkpoint(path: str | Path) -> tuple[SaeModel, AdamState | None]:
    path = Path(path)
    cur = _Cursor(path.read_bytes(), path)
    if cur.take(4) != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<H", cur.take(2))
    if version != VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {version}, expected {VERSION}")
    (header_len,) = struct.unpack("<I", cur.take(4))
    try:
        header = json.loads(cur.take(header_len).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise TruncatedFile(f"{path}: unreadable header: {exc}") from None

    arch = arch_from_json(header["arch"])
    model = init_model(arch, seed=int(header.get("rng_seed", 0)), dtype=np.float32)

    expected_params = [k for k, _ in model.named_params()]
    stored_params = [k for k, _ in header["params"]]
    if expected_params != stored_params:
        raise VersionMismatch(f"{path}: parameter layout does not match architecture")
    for key, shape in header["params"]:
        model.set_param(key, cur.array(shape))
    for key, shape in header["bn_state"]:
        model.set_param(key, cur.array(shape))

    opt_state = None
    if header.get("has_opt_state"):
        opt_state = AdamState(model)
        opt_state.step = int(header.get("opt_step", 0))
        for key, shape in header["params"]:
            opt_state.m[key] = cur.array(shape)
        for key, shape in header["params"]:
            opt_state.v[key] = cur.array(shape)
    if cur.pos != len(cur.data):
        raise TruncatedFile(f"{path}: {len(cur.data) - cur.pos} unexpected trailing bytes")
    return model, opt_state
