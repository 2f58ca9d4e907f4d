"""
Checkpoint file layout, little-endian:

    magic 'PLUW' | version u32 | entry count u32
    entries      { name length u16 | utf-8 name | tensor in 'PLUT' encoding }
    snapshot     JSON length u32 | utf-8 JSON (architecture, step, epoch and free-form training state)

Entries hold the model tensors under their registry names followed by the optimizer moments under
'adam.m.<name>' and 'adam.v.<name>'.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import plunet.errors as err
from plunet.arch import ArchConfig, ModelGraph, build
from plunet.engine import Tensor, decode_tensor, encode_tensor
from plunet.nn.params import ParameterRegistry
from plunet.train.adam import AdamState

MAGIC = b"PLUW"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_NAME = struct.Struct("<H")
_LENGTH = struct.Struct("<I")

M_PREFIX = "adam.m."
V_PREFIX = "adam.v."


@dataclass
class Checkpoint:
    arch: ArchConfig
    params: ParameterRegistry
    state: AdamState = field(default_factory=AdamState)
    epoch: int = 0
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def model(self) -> ModelGraph:
        return build(self.arch)


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    entries: list[tuple[str, Tensor]] = [(name, checkpoint.params[name]) for name in checkpoint.params]
    for name in checkpoint.params.learnable:
        if name in checkpoint.state.m:
            entries.append((M_PREFIX + name, Tensor(checkpoint.state.m[name])))
            entries.append((V_PREFIX + name, Tensor(checkpoint.state.v[name])))

    chunks = [_HEADER.pack(MAGIC, VERSION, len(entries))]
    for name, tensor in entries:
        encoded = name.encode()
        chunks += [_NAME.pack(len(encoded)), encoded, encode_tensor(tensor)]

    snapshot = dict(
        arch=checkpoint.arch.to_dict(), step=checkpoint.state.step, epoch=checkpoint.epoch, extra=checkpoint.extra
    )
    encoded_snapshot = json.dumps(snapshot, sort_keys=True).encode()
    chunks += [_LENGTH.pack(len(encoded_snapshot)), encoded_snapshot]

    return b"".join(chunks)


def decode_checkpoint(buffer: bytes) -> Checkpoint:
    if len(buffer) < _HEADER.size:
        raise err.cannot_decode("checkpoint", "truncated header")

    magic, version, count = _HEADER.unpack_from(buffer)
    if magic != MAGIC:
        raise err.cannot_decode("checkpoint", f"bad magic {magic!r}")

    if version != VERSION:
        raise err.cannot_decode("checkpoint", f"unsupported version {version}")

    offset = _HEADER.size
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        if offset + _NAME.size > len(buffer):
            raise err.cannot_decode("checkpoint", "truncated entry")

        (length,) = _NAME.unpack_from(buffer, offset)
        offset += _NAME.size
        name = bytes(buffer[offset : offset + length]).decode()
        offset += length

        if name in tensors:
            raise err.duplicate_parameter(name)

        tensors[name], offset = decode_tensor(buffer, offset)

    if offset + _LENGTH.size > len(buffer):
        raise err.cannot_decode("checkpoint", "missing configuration snapshot")

    (length,) = _LENGTH.unpack_from(buffer, offset)
    offset += _LENGTH.size
    try:
        snapshot = json.loads(bytes(buffer[offset : offset + length]).decode())

    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise err.cannot_decode("checkpoint", f"invalid configuration snapshot ({e})")

    try:
        arch_fields, step, epoch = snapshot["arch"], int(snapshot["step"]), int(snapshot["epoch"])
        extra = dict(snapshot.get("extra", {}))

    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise err.cannot_decode("checkpoint", f"incomplete configuration snapshot ({e!r})")

    arch = ArchConfig.from_dict(arch_fields)
    model = build(arch)

    state = AdamState(step=step)
    params: dict[str, Tensor] = {}
    for name, tensor in tensors.items():
        if name.startswith(M_PREFIX):
            state.m[name.removeprefix(M_PREFIX)] = tensor.data
        elif name.startswith(V_PREFIX):
            state.v[name.removeprefix(V_PREFIX)] = tensor.data
        else:
            params[name] = tensor

    known = {spec.name for spec in model.param_specs}
    if unknown := set(params) - known:
        raise err.cannot_decode("checkpoint", f"unexpected tensors {sorted(unknown)}")

    return Checkpoint(
        arch,
        ParameterRegistry(model.param_specs, params),
        state,
        epoch=epoch,
        extra=extra,
    )


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(checkpoint))
    tmp.replace(path)


def load_checkpoint(path: Path) -> Checkpoint:
    try:
        return decode_checkpoint(path.read_bytes())

    except FileNotFoundError:
        raise err.os_error(f"Checkpoint '{path}' does not exist")
