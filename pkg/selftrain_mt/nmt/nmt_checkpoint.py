"""
Checkpoint files.

Layout: the magic bytes ``SLNMT1``; a little-endian uint32 length followed by a UTF-8 key=value header
(``config.*`` model settings, ``step``, ``meta.*`` free-form metadata); a uint32 record count; then per
parameter a uint32 name length, the UTF-8 name, a uint32 rank, one uint32 per dimension and the
row-major little-endian float64 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Sequence

import numpy as np

from selftrain_mt.common import ContractError, CorpusError
from selftrain_mt.formatter import KeyValueFormatter
from selftrain_mt.nmt.nmt_config import ModelConfig
from selftrain_mt.nmt.nmt_model import ParameterSet
from selftrain_mt.tensor.tensor_autodiff import Array

CHECKPOINT_MAGIC = b"SLNMT1"
_UINT32 = struct.Struct("<I")


@dataclass(eq=False)
class Checkpoint:
    config: ModelConfig
    params: Dict[str, Array]
    step: int
    metadata: Dict[str, str] = field(default_factory=dict)
    version: str = CHECKPOINT_MAGIC.decode("ascii")

    @staticmethod
    def from_parameters(params: ParameterSet, step: int, metadata: Optional[Dict[str, str]] = None) -> Checkpoint:
        return Checkpoint(
            config=params.config,
            params={name: t.data.copy() for name, t in params.tensors.items()},
            step=step,
            metadata=dict(metadata or {}),
        )

    def parameter_set(self) -> ParameterSet:
        return ParameterSet.from_arrays(self.config, {name: arr.copy() for name, arr in self.params.items()})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            self.version == other.version
            and self.config == other.config
            and self.step == other.step
            and self.metadata == other.metadata
            and list(self.params) == list(other.params)
            and all(
                self.params[name].shape == other.params[name].shape
                and self.params[name].astype("<f8").tobytes() == other.params[name].astype("<f8").tobytes()
                for name in self.params
            )
        )

    def _header_text(self) -> str:
        header: Dict[str, object] = {
            f"config.{key}": value for key, value in KeyValueFormatter.dataclass_to_dict(self.config).items()
        }
        header["step"] = self.step
        header.update({f"meta.{key}": value for key, value in self.metadata.items()})
        return KeyValueFormatter.to_text(header)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as out:
            out.write(CHECKPOINT_MAGIC)
            header = self._header_text().encode("utf-8")
            out.write(_UINT32.pack(len(header)))
            out.write(header)
            out.write(_UINT32.pack(len(self.params)))
            for name, values in self.params.items():
                encoded = name.encode("utf-8")
                out.write(_UINT32.pack(len(encoded)))
                out.write(encoded)
                out.write(_UINT32.pack(values.ndim))
                for dim in values.shape:
                    out.write(_UINT32.pack(dim))
                out.write(np.ascontiguousarray(values, dtype="<f8").tobytes())

    @staticmethod
    def load(path: str | Path) -> Checkpoint:
        path = Path(path)
        if not path.exists():
            raise CorpusError(f"Checkpoint not found: {path}")
        with path.open("rb") as stream:
            magic = stream.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise CorpusError(f"{path}: not a checkpoint (magic {magic!r})")
            header = KeyValueFormatter.parse(_read_exact(stream, _read_uint32(stream, path), path).decode("utf-8"))
            params: Dict[str, Array] = {}
            for _ in range(_read_uint32(stream, path)):
                name = _read_exact(stream, _read_uint32(stream, path), path).decode("utf-8")
                shape = tuple(_read_uint32(stream, path) for _ in range(_read_uint32(stream, path)))
                count = int(np.prod(shape)) if shape else 1
                raw = _read_exact(stream, 8 * count, path)
                params[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            if stream.read(1):
                raise CorpusError(f"{path}: trailing bytes after the last parameter record")

        config_values = {k[len("config.") :]: v for k, v in header.items() if k.startswith("config.")}
        metadata = {k[len("meta.") :]: v for k, v in header.items() if k.startswith("meta.")}
        if "step" not in header:
            raise CorpusError(f"{path}: header has no step")
        return Checkpoint(
            config=ModelConfig.from_mapping(config_values),
            params=params,
            step=int(header["step"]),
            metadata=metadata,
        )


def _read_exact(stream: BinaryIO, size: int, path: Path) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise CorpusError(f"{path}: truncated checkpoint (wanted {size} bytes, got {len(data)})")
    return data


def _read_uint32(stream: BinaryIO, path: Path) -> int:
    return int(_UINT32.unpack(_read_exact(stream, _UINT32.size, path))[0])


def average_checkpoints(checkpoints: Sequence[Checkpoint]) -> ParameterSet:
    """Elementwise mean of the parameters, accumulated as a running mean so equal inputs stay bit-identical."""
    if not checkpoints:
        raise ContractError("Cannot average an empty list of checkpoints")
    first = checkpoints[0]
    for other in checkpoints[1:]:
        if other.config != first.config or list(other.params) != list(first.params):
            raise ContractError(f"Checkpoint at step {other.step} does not match the one at step {first.step}")
        for name, values in other.params.items():
            if values.shape != first.params[name].shape:
                raise ContractError(
                    f"Parameter '{name}' has shape {values.shape} at step {other.step}, "
                    f"{first.params[name].shape} at step {first.step}"
                )

    mean = {name: values.astype(np.float64, copy=True) for name, values in first.params.items()}
    for count, other in enumerate(checkpoints[1:], start=2):
        for name in mean:
            mean[name] += (other.params[name] - mean[name]) / count
    return ParameterSet.from_arrays(first.config, mean)


def last_checkpoints(checkpoints: Sequence[Checkpoint], keep: int) -> List[Checkpoint]:
    return list(checkpoints[-keep:]) if keep > 0 else []
