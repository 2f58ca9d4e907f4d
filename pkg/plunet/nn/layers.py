from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum, auto

from plunet.engine import ConvSpec, Dims


class LayerKind(StrEnum):
    conv = auto()
    conv_transpose = auto()
    batchnorm = auto()
    relu = auto()
    sigmoid = auto()
    maxpool = auto()
    global_avg_pool = auto()
    linear = auto()
    scale = auto()
    concat = auto()


@dataclass(frozen=True)
class Layer:
    """One primitive stage of a model, as seen by a static walk."""

    name: str
    kind: LayerKind
    in_dims: Dims
    out_dims: Dims
    conv: ConvSpec | None = None


def elementwise(name: str, kind: LayerKind, dims: Dims) -> Layer:
    return Layer(name, kind, dims, dims)
