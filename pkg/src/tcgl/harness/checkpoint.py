"""Binary model checkpoints.

Layout, all integers little-endian u32::

    b"TCGL" | version | config length | config text (utf-8 key=value lines)
    then one record per tensor until the trailing 4 bytes:
        name length | name | rank | dims... | values (f64 LE)
    crc32 of every preceding byte

Tensor names are namespaced: ``param/<name>`` for model parameters,
``momentum/<name>`` for optimizer buffers, ``best/<name>`` for the best
validation snapshot and ``meta/<key>`` for scalars. Every random draw in
training comes from a sub-stream keyed by (seed, epoch, index), so the epoch
counter is the whole RNG state.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import TCGLModel, init_model
from .config import TrainConfig

MAGIC = b"TCGL"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    params: dict[str, np.ndarray]
    momentum: dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0  # completed epochs
    best_params: dict[str, np.ndarray] | None = None
    best_val: float = float("nan")
    best_epoch: int = -1
    version: int = VERSION

    def model(self, best: bool = False) -> TCGLModel:
        params = self.best_params if best else self.params
        if params is None:
            raise CheckpointError("checkpoint holds no best-validation snapshot")
        model = init_model(self.config)
        model.load_arrays(params)
        return model

    def best_checkpoint(self) -> Checkpoint:
        """The best-validation snapshot as a stand-alone checkpoint."""
        if self.best_params is None:
            raise CheckpointError("checkpoint holds no best-validation snapshot")
        return Checkpoint(self.config, self.best_params, {}, self.best_epoch, None,
                          self.best_val, self.best_epoch)

    @classmethod
    def from_model(cls, config: TrainConfig, model: TCGLModel, **kwargs) -> Checkpoint:
        return cls(config, model.arrays(), **kwargs)

    def to_bytes(self) -> bytes:
        return dumps(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(dumps(self))

    @classmethod
    def load(cls, path: str | Path) -> Checkpoint:
        return loads(Path(path).read_bytes())


def _tensor_record(name: str, value: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(value, dtype="<f8")
    key = name.encode("utf-8")
    head = _U32.pack(len(key)) + key + _U32.pack(arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def _tensors(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    out = [(f"param/{k}", v) for k, v in ckpt.params.items()]
    out += [(f"momentum/{k}", v) for k, v in ckpt.momentum.items()]
    if ckpt.best_params is not None:
        out += [(f"best/{k}", v) for k, v in ckpt.best_params.items()]
    out += [("meta/epoch", np.array(float(ckpt.epoch))),
            ("meta/best_val", np.array(ckpt.best_val)),
            ("meta/best_epoch", np.array(float(ckpt.best_epoch)))]
    return out


def dumps(ckpt: Checkpoint) -> bytes:
    config = ckpt.config.to_text().encode("utf-8")
    parts = [MAGIC, _U32.pack(ckpt.version), _U32.pack(len(config)), config]
    parts += [_tensor_record(name, value) for name, value in _tensors(ckpt)]
    payload = b"".join(parts)
    return payload + _U32.pack(zlib.crc32(payload))


def _read_u32(blob: bytes, offset: int, end: int) -> tuple[int, int]:
    if offset + 4 > end:
        raise CheckpointError("truncated checkpoint")
    return _U32.unpack_from(blob, offset)[0], offset + 4


def loads(blob: bytes) -> Checkpoint:
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError("not a TCGL checkpoint")
    end = len(blob) - 4
    (crc,) = _U32.unpack_from(blob, end)
    if zlib.crc32(blob[:end]) != crc:
        raise CheckpointError("checkpoint CRC mismatch")
    version, offset = _read_u32(blob, 4, end)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    size, offset = _read_u32(blob, offset, end)
    if offset + size > end:
        raise CheckpointError("truncated config block")
    config = TrainConfig.from_text(blob[offset:offset + size].decode("utf-8"))
    offset += size

    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "momentum": {}, "best": {}, "meta": {}}
    while offset < end:
        length, offset = _read_u32(blob, offset, end)
        name = blob[offset:offset + length].decode("utf-8")
        offset += length
        rank, offset = _read_u32(blob, offset, end)
        dims = []
        for _ in range(rank):
            d, offset = _read_u32(blob, offset, end)
            dims.append(d)
        count = int(np.prod(dims, dtype=np.int64))
        if offset + 8 * count > end:
            raise CheckpointError(f"truncated tensor {name!r}")
        value = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(dims)
        offset += 8 * count
        space, _, key = name.partition("/")
        if space not in groups or not key:
            raise CheckpointError(f"unexpected tensor name {name!r}")
        groups[space][key] = value.astype(np.float64)

    meta = {k: float(np.asarray(v).reshape(-1)[0]) for k, v in groups["meta"].items()}
    return Checkpoint(
        config=config,
        params=groups["param"],
        momentum=groups["momentum"],
        epoch=int(meta.get("epoch", 0.0)),
        best_params=groups["best"] or None,
        best_val=float(meta.get("best_val", float("nan"))),
        best_epoch=int(meta.get("best_epoch", -1.0)),
        version=version,
    )
