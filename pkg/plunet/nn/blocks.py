"""
Composite units: plain Conv block, SE block, LG block, LS block and PS module.

Parameters are named '<block_path>.<stage>.<tensor>', e.g. 'enc1.lg.branch_d3.w' or 'bottleneck.branch_d6.bn.gamma'.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import override

import plunet.errors as err
from plunet.engine import (
    ConvSpec,
    Dims,
    Tensor,
    batchnorm2d,
    concat_channels,
    conv2d,
    conv2d_depthwise_separable,
    global_avg_pool,
    linear,
    relu,
    scale_channels,
    sigmoid,
)
from plunet.names import BlockKind, Mode
from plunet.nn.layers import Layer, LayerKind, elementwise
from plunet.nn.params import ParamKind, ParamSpec, ParamView, join

DEFAULT_SE_REDUCTION = 16
LG_DILATIONS = (1, 3)
PS_DILATIONS = (1, 6, 12, 18)


@dataclass(frozen=True)
class BlockSpec:
    kind: BlockKind
    in_channels: int
    out_channels: int
    se_reduction: int = DEFAULT_SE_REDUCTION
    dilations: tuple[int, ...] = ()
    separable: bool = True  # ps: depthwise-separable branches, False gives ordinary-conv ASPP
    attention: bool = True  # ps: SE gate after the fusion

    def __post_init__(self) -> None:
        if not self.dilations:
            default = {BlockKind.lg: LG_DILATIONS, BlockKind.ls: LG_DILATIONS, BlockKind.ps: PS_DILATIONS}
            object.__setattr__(self, "dilations", default.get(self.kind, ()))

        if self.in_channels < 1 or self.out_channels < 1:
            raise err.invalid_widths((self.in_channels, self.out_channels), self.out_channels)

        if self.kind in (BlockKind.lg, BlockKind.ls) and len(self.dilations) != 2:
            raise err.invalid_dilations(self.kind, self.dilations)

        if self.kind is BlockKind.ps and not self.dilations:
            raise err.invalid_dilations(self.kind, self.dilations)

        if any(d < 1 for d in self.dilations):
            raise err.invalid_dilations(self.kind, self.dilations)

        if self.kind is BlockKind.se and self.in_channels != self.out_channels:
            raise err.channel_mismatch("se", self.out_channels, self.in_channels)

        if self.uses_se and (self.se_reduction < 1 or self.out_channels % self.se_reduction):
            raise err.invalid_reduction(self.out_channels, self.se_reduction)

    @property
    def uses_se(self) -> bool:
        return self.kind in (BlockKind.se, BlockKind.ls) or (self.kind is BlockKind.ps and self.attention)

    @property
    def branch_names(self) -> list[str]:
        if len(set(self.dilations)) == len(self.dilations):
            return [f"branch_d{d}" for d in self.dilations]

        return [f"branch{i}_d{d}" for i, d in enumerate(self.dilations)]

    def se_spec(self) -> BlockSpec:
        return BlockSpec(BlockKind.se, self.out_channels, self.out_channels, self.se_reduction)

    def lg_spec(self) -> BlockSpec:
        return BlockSpec(BlockKind.lg, self.in_channels, self.out_channels, self.se_reduction, self.dilations)


# region stage helpers
def _conv_params(name: str, spec: ConvSpec) -> list[ParamSpec]:
    specs = [ParamSpec(join(name, "w"), spec.weight_dims, ParamKind.weight, spec.fan_in)]
    if spec.bias:
        specs.append(ParamSpec(join(name, "b"), (1, spec.out_channels, 1, 1), ParamKind.bias))

    return specs


def _bn_params(name: str, channels: int) -> list[ParamSpec]:
    return [
        ParamSpec(join(name, kind), (1, channels, 1, 1), kind)
        for kind in (ParamKind.gamma, ParamKind.beta, ParamKind.running_mean, ParamKind.running_var)
    ]


def _linear_params(name: str, in_features: int, out_features: int) -> list[ParamSpec]:
    return [
        ParamSpec(join(name, "w"), (out_features, in_features, 1, 1), ParamKind.weight, in_features),
        ParamSpec(join(name, "b"), (1, out_features, 1, 1), ParamKind.bias),
    ]


def _unit_params(name: str, spec: ConvSpec) -> list[ParamSpec]:
    return _conv_params(name, spec) + _bn_params(join(name, "bn"), spec.out_channels)


def _bn(x: Tensor, params: ParamView, mode: Mode) -> Tensor:
    return batchnorm2d(x, params["gamma"], params["beta"], params["running_mean"], params["running_var"], mode)


def _unit(x: Tensor, params: ParamView, spec: ConvSpec, mode: Mode) -> Tensor:
    """conv -> BN -> ReLU"""
    y = conv2d(x, params["w"], params.optional("b"), spec)
    return relu(_bn(y, params.scope("bn"), mode))


def _unit_layers(name: str, spec: ConvSpec, dims: Dims) -> tuple[list[Layer], Dims]:
    out = spec.output_dims(dims)
    return [
        Layer(name, LayerKind.conv, dims, out, spec),
        elementwise(join(name, "bn"), LayerKind.batchnorm, out),
        elementwise(join(name, "relu"), LayerKind.relu, out),
    ], out


def _concat_dims(parts: list[Dims]) -> Dims:
    n, _, h, w = parts[0]
    return (n, sum(p[1] for p in parts), h, w)


# endregion


class Block(ABC):
    def __init__(self, spec: BlockSpec) -> None:
        self.spec: BlockSpec = spec

    @abstractmethod
    def param_specs(self, prefix: str) -> list[ParamSpec]: ...

    @abstractmethod
    def forward(self, x: Tensor, params: ParamView, mode: Mode) -> Tensor: ...

    @abstractmethod
    def layers(self, prefix: str, dims: Dims) -> list[Layer]: ...

    def output_dims(self, dims: Dims) -> Dims:
        n, c, h, w = dims
        if c != self.spec.in_channels:
            raise err.channel_mismatch(self.spec.kind, self.spec.in_channels, c)

        return (n, self.spec.out_channels, h, w)

    def _check_input(self, x: Tensor) -> None:
        self.output_dims(x.dims)


class ConvBlock(Block):
    """conv3x3 -> BN -> ReLU -> conv3x3 -> BN -> ReLU"""

    @property
    def convs(self) -> tuple[ConvSpec, ConvSpec]:
        return (
            ConvSpec.same(self.spec.in_channels, self.spec.out_channels),
            ConvSpec.same(self.spec.out_channels, self.spec.out_channels),
        )

    @override
    def param_specs(self, prefix: str) -> list[ParamSpec]:
        first, second = self.convs
        return _unit_params(join(prefix, "conv1"), first) + _unit_params(join(prefix, "conv2"), second)

    @override
    def forward(self, x: Tensor, params: ParamView, mode: Mode) -> Tensor:
        self._check_input(x)
        first, second = self.convs
        return _unit(_unit(x, params.scope("conv1"), first, mode), params.scope("conv2"), second, mode)

    @override
    def layers(self, prefix: str, dims: Dims) -> list[Layer]:
        first, second = self.convs
        layers, dims = _unit_layers(join(prefix, "conv1"), first, dims)
        more, _ = _unit_layers(join(prefix, "conv2"), second, dims)
        return layers + more


class SEBlock(Block):
    """Squeeze (global average pool) and excitation (C -> C/r -> C, ReLU then sigmoid) channel gate."""

    @property
    def hidden(self) -> int:
        return self.spec.out_channels // self.spec.se_reduction

    @override
    def param_specs(self, prefix: str) -> list[ParamSpec]:
        channels = self.spec.out_channels
        return _linear_params(join(prefix, "fc1"), channels, self.hidden) + _linear_params(
            join(prefix, "fc2"), self.hidden, channels
        )

    def gate(self, x: Tensor, params: ParamView) -> Tensor:
        fc1, fc2 = params.scope("fc1"), params.scope("fc2")
        squeezed = global_avg_pool(x)
        return sigmoid(linear(relu(linear(squeezed, fc1["w"], fc1["b"])), fc2["w"], fc2["b"]))

    @override
    def forward(self, x: Tensor, params: ParamView, mode: Mode) -> Tensor:
        del mode
        self._check_input(x)
        return scale_channels(x, self.gate(x, params))

    @override
    def layers(self, prefix: str, dims: Dims) -> list[Layer]:
        n, c, _, _ = dims
        pooled: Dims = (n, c, 1, 1)
        hidden: Dims = (n, self.hidden, 1, 1)
        return [
            Layer(join(prefix, "squeeze"), LayerKind.global_avg_pool, dims, pooled),
            Layer(join(prefix, "fc1"), LayerKind.linear, pooled, hidden, ConvSpec.pointwise(c, self.hidden)),
            elementwise(join(prefix, "fc1.relu"), LayerKind.relu, hidden),
            Layer(join(prefix, "fc2"), LayerKind.linear, hidden, pooled, ConvSpec.pointwise(self.hidden, c)),
            elementwise(join(prefix, "fc2.sigmoid"), LayerKind.sigmoid, pooled),
            elementwise(join(prefix, "scale"), LayerKind.scale, dims),
        ]


class LGBlock(Block):
    """Two 3x3 branches with dilations 1 and 3, concatenated, fused by a 1x1 conv; each conv is followed by BN, ReLU."""

    @property
    def branches(self) -> list[tuple[str, ConvSpec]]:
        return [
            (name, ConvSpec.same(self.spec.in_channels, self.spec.out_channels, dilation=d))
            for name, d in zip(self.spec.branch_names, self.spec.dilations, strict=True)
        ]

    @property
    def fusion(self) -> ConvSpec:
        return ConvSpec.pointwise(len(self.spec.dilations) * self.spec.out_channels, self.spec.out_channels)

    @override
    def param_specs(self, prefix: str) -> list[ParamSpec]:
        specs = [p for name, conv in self.branches for p in _unit_params(join(prefix, name), conv)]
        return specs + _unit_params(join(prefix, "fuse"), self.fusion)

    @override
    def forward(self, x: Tensor, params: ParamView, mode: Mode) -> Tensor:
        self._check_input(x)
        branches = [_unit(x, params.scope(name), conv, mode) for name, conv in self.branches]
        return _unit(concat_channels(branches), params.scope("fuse"), self.fusion, mode)

    @override
    def layers(self, prefix: str, dims: Dims) -> list[Layer]:
        layers: list[Layer] = []
        outputs: list[Dims] = []
        for name, conv in self.branches:
            branch, out = _unit_layers(join(prefix, name), conv, dims)
            layers += branch
            outputs.append(out)

        joined = _concat_dims(outputs)
        layers.append(Layer(join(prefix, "concat"), LayerKind.concat, joined, joined))
        fused, _ = _unit_layers(join(prefix, "fuse"), self.fusion, joined)
        return layers + fused


class LSBlock(Block):
    """LG block followed by an SE gate."""

    def __init__(self, spec: BlockSpec) -> None:
        super().__init__(spec)
        self.lg: LGBlock = LGBlock(spec.lg_spec())
        self.se: SEBlock = SEBlock(spec.se_spec())

    @override
    def param_specs(self, prefix: str) -> list[ParamSpec]:
        return self.lg.param_specs(join(prefix, "lg")) + self.se.param_specs(join(prefix, "se"))

    @override
    def forward(self, x: Tensor, params: ParamView, mode: Mode) -> Tensor:
        return self.se.forward(self.lg.forward(x, params.scope("lg"), mode), params.scope("se"), mode)

    @override
    def layers(self, prefix: str, dims: Dims) -> list[Layer]:
        return self.lg.layers(join(prefix, "lg"), dims) + self.se.layers(join(prefix, "se"), self.output_dims(dims))


class PSModule(Block):
    """
    ASPP without the image-pooling branch: parallel 3x3 atrous branches (depthwise-separable by default), each
    followed by BN and ReLU, concatenated in dilation order, fused by a 1x1 conv + BN + ReLU, then gated by SE.
    """

    def __init__(self, spec: BlockSpec) -> None:
        super().__init__(spec)
        self.se: SEBlock | None = SEBlock(spec.se_spec()) if spec.attention else None

    @property
    def branches(self) -> list[tuple[str, ConvSpec]]:
        """(name, in -> out spec); separable branches split it into depthwise and pointwise stages."""
        return [
            (name, ConvSpec.same(self.spec.in_channels, self.spec.out_channels, dilation=d))
            for name, d in zip(self.spec.branch_names, self.spec.dilations, strict=True)
        ]

    @property
    def fusion(self) -> ConvSpec:
        return ConvSpec.pointwise(len(self.spec.dilations) * self.spec.out_channels, self.spec.out_channels)

    @staticmethod
    def separable_parts(spec: ConvSpec) -> tuple[ConvSpec, ConvSpec]:
        c = spec.in_channels
        depthwise = ConvSpec(c, c, spec.kernel, spec.stride, spec.padding, spec.dilation, groups=c)
        return depthwise, ConvSpec.pointwise(c, spec.out_channels)

    @override
    def param_specs(self, prefix: str) -> list[ParamSpec]:
        specs: list[ParamSpec] = []
        for name, conv in self.branches:
            path = join(prefix, name)
            if self.spec.separable:
                depthwise, pointwise = self.separable_parts(conv)
                specs += _conv_params(join(path, "depthwise"), depthwise) + _conv_params(
                    join(path, "pointwise"), pointwise
                )
                specs += _bn_params(join(path, "bn"), conv.out_channels)
            else:
                specs += _unit_params(path, conv)

        specs += _unit_params(join(prefix, "fuse"), self.fusion)
        if self.se is not None:
            specs += self.se.param_specs(join(prefix, "se"))

        return specs

    def _branch(self, x: Tensor, params: ParamView, conv: ConvSpec, mode: Mode) -> Tensor:
        if not self.spec.separable:
            return _unit(x, params, conv, mode)

        depthwise, pointwise = params.scope("depthwise"), params.scope("pointwise")
        y = conv2d_depthwise_separable(
            x, depthwise["w"], pointwise["w"], conv, depthwise.optional("b"), pointwise.optional("b")
        )
        return relu(_bn(y, params.scope("bn"), mode))

    @override
    def forward(self, x: Tensor, params: ParamView, mode: Mode) -> Tensor:
        self._check_input(x)
        branches = [self._branch(x, params.scope(name), conv, mode) for name, conv in self.branches]
        fused = _unit(concat_channels(branches), params.scope("fuse"), self.fusion, mode)
        if self.se is None:
            return fused

        return self.se.forward(fused, params.scope("se"), mode)

    @override
    def layers(self, prefix: str, dims: Dims) -> list[Layer]:
        layers: list[Layer] = []
        outputs: list[Dims] = []
        for name, conv in self.branches:
            path = join(prefix, name)
            if self.spec.separable:
                depthwise, pointwise = self.separable_parts(conv)
                mid = depthwise.output_dims(dims)
                out = pointwise.output_dims(mid)
                layers += [
                    Layer(join(path, "depthwise"), LayerKind.conv, dims, mid, depthwise),
                    Layer(join(path, "pointwise"), LayerKind.conv, mid, out, pointwise),
                    elementwise(join(path, "bn"), LayerKind.batchnorm, out),
                    elementwise(join(path, "relu"), LayerKind.relu, out),
                ]
            else:
                branch, out = _unit_layers(path, conv, dims)
                layers += branch

            outputs.append(out)

        joined = _concat_dims(outputs)
        layers.append(Layer(join(prefix, "concat"), LayerKind.concat, joined, joined))
        fused, out = _unit_layers(join(prefix, "fuse"), self.fusion, joined)
        layers += fused
        if self.se is not None:
            layers += self.se.layers(join(prefix, "se"), out)

        return layers


def make_block(spec: BlockSpec) -> Block:
    match spec.kind:
        case BlockKind.conv_block:
            return ConvBlock(spec)
        case BlockKind.se:
            return SEBlock(spec)
        case BlockKind.lg:
            return LGBlock(spec)
        case BlockKind.ls:
            return LSBlock(spec)
        case BlockKind.ps:
            return PSModule(spec)


def conv_block_forward(x: Tensor, params: ParamView, spec: BlockSpec, mode: Mode = Mode.train) -> Tensor:
    return ConvBlock(spec).forward(x, params, mode)


def se_forward(x: Tensor, params: ParamView, spec: BlockSpec, mode: Mode = Mode.train) -> Tensor:
    return SEBlock(spec).forward(x, params, mode)


def lg_forward(x: Tensor, params: ParamView, spec: BlockSpec, mode: Mode = Mode.train) -> Tensor:
    return LGBlock(spec).forward(x, params, mode)


def ls_forward(x: Tensor, params: ParamView, spec: BlockSpec, mode: Mode = Mode.train) -> Tensor:
    return LSBlock(spec).forward(x, params, mode)


def ps_forward(x: Tensor, params: ParamView, spec: BlockSpec, mode: Mode = Mode.train) -> Tensor:
    return PSModule(spec).forward(x, params, mode)
