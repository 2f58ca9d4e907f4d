"""
Static parameter and FLOP accounting over a model's layer walk.

conv:            params (Cin/g)*Cout*kh*kw (+Cout bias), MACs N*Cout*Hout*Wout*(Cin/g)*kh*kw
conv_transpose:  params Cin*Cout*4 (+Cout bias),        MACs N*Cin*H*W*Cout*4
linear:          params in*out + out,                   MACs N*in*out
batchnorm:       params 2C (running statistics are not learnable)
elementwise stages (BN, activations, SE scaling) add 1 FLOP per output element whatever the convention; pooling
stages count their input elements and concatenation is free.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

from plunet.arch import ModelGraph, layers
from plunet.engine import Dims
from plunet.names import FlopConvention
from plunet.nn.layers import Layer, LayerKind


@dataclass(frozen=True)
class Tally:
    """Per-layer counts, keyed by layer name, in walk order."""

    rows: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.rows.values())


@dataclass(frozen=True)
class CostRow:
    name: str
    kind: LayerKind
    params: int
    flops: int


@dataclass(frozen=True)
class CostReport:
    input_dims: Dims
    convention: FlopConvention
    rows: tuple[CostRow, ...]

    @property
    def total_params(self) -> int:
        return sum(row.params for row in self.rows)

    @property
    def total_flops(self) -> int:
        return sum(row.flops for row in self.rows)

    def to_dict(self) -> dict[str, Any]:
        return dict(
            input_dims=list(self.input_dims),
            convention=str(self.convention),
            rows=[dict(name=row.name, params=row.params, flops=row.flops) for row in self.rows],
            totals=dict(params=self.total_params, flops=self.total_flops),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def layer_params(layer: Layer) -> int:
    conv = layer.conv
    match layer.kind:
        case LayerKind.conv | LayerKind.linear:
            assert conv is not None
            return math.prod(conv.weight_dims) + (conv.out_channels if conv.bias else 0)

        case LayerKind.conv_transpose:
            assert conv is not None
            return conv.in_channels * conv.out_channels * 4 + (conv.out_channels if conv.bias else 0)

        case LayerKind.batchnorm:
            return 2 * layer.out_dims[1]

        case _:
            return 0


def layer_macs(layer: Layer) -> int:
    conv = layer.conv
    match layer.kind:
        case LayerKind.conv | LayerKind.linear:
            assert conv is not None
            return math.prod(layer.out_dims) * conv.fan_in

        case LayerKind.conv_transpose:
            assert conv is not None
            return math.prod(layer.in_dims) * conv.out_channels * 4

        case _:
            return 0


def layer_flops(layer: Layer, convention: FlopConvention = FlopConvention.TWO_MACS) -> int:
    match layer.kind:
        case LayerKind.conv | LayerKind.linear | LayerKind.conv_transpose:
            return convention.factor * layer_macs(layer)

        case LayerKind.concat:
            return 0

        case LayerKind.global_avg_pool | LayerKind.maxpool:
            return math.prod(layer.in_dims)

        case _:
            return math.prod(layer.out_dims)


def nominal_dims(model: ModelGraph) -> Dims:
    config = model.config
    return (1, config.in_channels, config.multiple, config.multiple)


def count_params(model: ModelGraph) -> Tally:
    """Learnable parameters of every parameterized layer; independent of input size."""
    return Tally({layer.name: p for layer in layers(model, nominal_dims(model)) if (p := layer_params(layer))})


def count_flops(model: ModelGraph, dims: Dims, convention: FlopConvention = FlopConvention.TWO_MACS) -> Tally:
    return Tally({layer.name: layer_flops(layer, convention) for layer in layers(model, dims)})


def cost_report(model: ModelGraph, dims: Dims, convention: FlopConvention = FlopConvention.TWO_MACS) -> CostReport:
    return CostReport(
        dims,
        convention,
        tuple(
            CostRow(layer.name, layer.kind, layer_params(layer), layer_flops(layer, convention))
            for layer in layers(model, dims)
        ),
    )
