"""Binary model persistence.

Layout, all integers little-endian::

    b"RDCC" | uint32 version | uint32 header_bytes | UTF-8 JSON header
    then for each parameter named in the header, in order:
    uint32 rank | uint32 extent * rank | float64 values, row-major
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from rdcnn.config import TrainConfig
from rdcnn.encoder import FEATURE_VOCAB, CharVocab
from rdcnn.trainer import Model

MAGIC = b"RDCC"
VERSION = 1
_U32 = struct.Struct("<I")


class ModelFileError(ValueError):
    pass


def _header(model: Model) -> dict:
    cfg = model.config
    return {
        "config": cfg.to_dict(),
        "ablation": {"branches": cfg.branches, "residual": cfg.residual, "n_r": cfg.n_r, "d_b": cfg.d_b},
        "chars": model.vocab.itos,
        "tags": list(model.tags),
        "features": list(FEATURE_VOCAB),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in model.params.items()],
    }


def dumps(model: Model) -> bytes:
    header = json.dumps(_header(model), ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(header)), header]
    for value in model.params.values():
        parts.append(_U32.pack(value.ndim))
        parts.extend(_U32.pack(n) for n in value.shape)
        parts.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFileError(f"truncated model file while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def loads(data: bytes) -> Model:
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise ModelFileError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise ModelFileError(f"unsupported model file version: expected {VERSION}, found {version}")
    try:
        header = json.loads(r.take(r.u32("header length"), "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"corrupt header: {exc}") from None
    missing = {"config", "chars", "tags", "features", "params"} - set(header if isinstance(header, dict) else ())
    if missing:
        raise ModelFileError(f"header is missing {', '.join(sorted(missing))}")
    if header.get("features") != list(FEATURE_VOCAB):
        raise ModelFileError("feature vocabulary in the header does not match this build")
    params = {}
    for entry in header["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        rank = r.u32(f"{name} rank")
        found = tuple(r.u32(f"{name} shape") for _ in range(rank))
        if found != shape:
            raise ModelFileError(f"{name}: blob shape {found} disagrees with header shape {shape}")
        count = int(np.prod(shape, dtype=np.int64))
        raw = r.take(8 * count, name)
        params[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(data):
        raise ModelFileError(f"{len(data) - r.pos} trailing bytes after the last parameter")
    vocab = CharVocab(header["chars"][2:])
    if vocab.itos != header["chars"]:
        raise ModelFileError("character vocabulary is not in canonical order")
    return Model(TrainConfig.from_dict(header["config"]), vocab, params, tuple(header["tags"]))


def write_atomic(path: str | Path, data: bytes | str) -> None:
    """Write ``data`` to a sibling temp file, then rename it over ``path``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def save(model: Model, path: str | Path) -> None:
    write_atomic(path, dumps(model))


def load(path: str | Path) -> Model:
    return loads(Path(path).read_bytes())
