from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field
from enum import StrEnum, auto

import plunet.errors as err
from plunet.arch.config import ArchConfig
from plunet.engine import (
    ConvSpec,
    Dims,
    DType,
    Tensor,
    concat_channels,
    conv2d,
    conv_transpose2d,
    maxpool2d,
    sigmoid,
)
from plunet.names import Mode
from plunet.nn.blocks import Block, BlockSpec, make_block
from plunet.nn.layers import Layer, LayerKind, elementwise
from plunet.nn.params import ParameterRegistry, ParamKind, ParamSpec, ParamView, join

INPUT = "input"


class NodeKind(StrEnum):
    block = auto()
    pool = auto()
    up = auto()
    concat = auto()
    head = auto()
    sigmoid = auto()


@dataclass(frozen=True)
class GraphNode:
    name: str
    kind: NodeKind
    inputs: tuple[str, ...]
    block: Block | None = None
    conv: ConvSpec | None = None

    def param_specs(self) -> list[ParamSpec]:
        match self.kind:
            case NodeKind.block:
                assert self.block is not None
                return self.block.param_specs(self.name)

            case NodeKind.up:
                assert self.conv is not None
                c_in, c_out = self.conv.in_channels, self.conv.out_channels
                return [
                    ParamSpec(join(self.name, "w"), (c_in, c_out, 2, 2), ParamKind.weight, c_in),
                    ParamSpec(join(self.name, "b"), (1, c_out, 1, 1), ParamKind.bias),
                ]

            case NodeKind.head:
                assert self.conv is not None
                return [
                    ParamSpec(join(self.name, "w"), self.conv.weight_dims, ParamKind.weight, self.conv.fan_in),
                    ParamSpec(join(self.name, "b"), (1, self.conv.out_channels, 1, 1), ParamKind.bias),
                ]

            case _:
                return []


@dataclass(frozen=True)
class ModelGraph:
    """Immutable node list in execution order; every node reads named outputs of earlier nodes."""

    config: ArchConfig
    nodes: tuple[GraphNode, ...]
    param_specs: tuple[ParamSpec, ...] = field(repr=False)

    def __iter__(self) -> Iterator[GraphNode]:
        return iter(self.nodes)

    def __getitem__(self, name: str) -> GraphNode:
        for node in self.nodes:
            if node.name == name:
                return node

        raise KeyError(name)

    def of_kind(self, kind: NodeKind) -> list[GraphNode]:
        return [node for node in self.nodes if node.kind is kind]

    @property
    def skips(self) -> list[tuple[str, str]]:
        """(encoder node, concat node) pairs."""
        return [(node.inputs[0], node.name) for node in self.of_kind(NodeKind.concat)]


def _block_node(name: str, spec: BlockSpec, source: str) -> GraphNode:
    return GraphNode(name, NodeKind.block, (source,), block=make_block(spec))


def build(config: ArchConfig) -> ModelGraph:
    """
    encoder: depth x (block -> maxpool), bottleneck block, decoder: depth x (up-conv -> concat skip -> block),
    head: 1x1 conv -> sigmoid.
    """
    r = config.se_reduction
    widths = config.widths
    nodes: list[GraphNode] = []

    source, channels = INPUT, config.in_channels
    for level, width in enumerate(widths, start=1):
        nodes.append(_block_node(f"enc{level}", BlockSpec(config.encoder_kind, channels, width, r), source))
        nodes.append(GraphNode(f"pool{level}", NodeKind.pool, (f"enc{level}",)))
        source, channels = f"pool{level}", width

    nodes.append(
        _block_node("bottleneck", BlockSpec(config.bottleneck_kind, channels, config.bottleneck_width, r), source)
    )
    source, channels = "bottleneck", config.bottleneck_width

    for level in range(config.depth, 0, -1):
        width = widths[level - 1]
        nodes.append(GraphNode(f"up{level}", NodeKind.up, (source,), conv=ConvSpec.make(channels, width, 2, stride=2)))
        nodes.append(GraphNode(f"cat{level}", NodeKind.concat, (f"enc{level}", f"up{level}")))
        nodes.append(_block_node(f"dec{level}", BlockSpec(config.decoder_kind, 2 * width, width, r), f"cat{level}"))
        source, channels = f"dec{level}", width

    nodes.append(GraphNode("head", NodeKind.head, (source,), conv=ConvSpec.pointwise(channels, config.out_channels)))
    nodes.append(GraphNode("sigmoid", NodeKind.sigmoid, ("head",)))

    specs = tuple(spec for node in nodes for spec in node.param_specs())
    seen: set[str] = set()
    for spec in specs:
        if spec.name in seen:
            raise err.duplicate_parameter(spec.name)
        seen.add(spec.name)

    model = ModelGraph(config, tuple(nodes), specs)
    _check_structure(model)
    return model


def _check_structure(model: ModelGraph) -> None:
    """Skip joins must see equal spatial extents and decoder blocks must receive skip + upsampled channels."""
    config = model.config
    dims = {INPUT: (1, config.in_channels, config.multiple, config.multiple)}
    for node in model:
        dims[node.name] = _node_dims(node, [dims[i] for i in node.inputs])

    skips = model.skips
    assert len(skips) == config.depth

    for encoder, concat in skips:
        level = concat.removeprefix("cat")
        skip, up = dims[encoder], dims[f"up{level}"]
        assert skip[2:] == up[2:], f"{concat}: skip extents {skip[2:]} differ from upsampled {up[2:]}"

        decoder = model[f"dec{level}"].block
        assert decoder is not None
        assert decoder.spec.in_channels == skip[1] + up[1], f"dec{level}: channel bookkeeping"


def _node_dims(node: GraphNode, inputs: list[Dims]) -> Dims:
    match node.kind:
        case NodeKind.block:
            assert node.block is not None
            return node.block.output_dims(inputs[0])

        case NodeKind.pool:
            n, c, h, w = inputs[0]
            return (n, c, h // 2, w // 2)

        case NodeKind.up:
            assert node.conv is not None
            n, _, h, w = inputs[0]
            return (n, node.conv.out_channels, 2 * h, 2 * w)

        case NodeKind.concat:
            n, _, h, w = inputs[0]
            return (n, sum(d[1] for d in inputs), h, w)

        case NodeKind.head:
            assert node.conv is not None
            return node.conv.output_dims(inputs[0])

        case NodeKind.sigmoid:
            return inputs[0]


def init_params(model: ModelGraph, seed: int, dtype: DType = DType.f32) -> ParameterRegistry:
    return ParameterRegistry.initialize(model.param_specs, seed, dtype)


def check_input(model: ModelGraph, dims: Dims) -> None:
    config = model.config
    if dims[1] != config.in_channels:
        raise err.channel_mismatch(str(config.variant), config.in_channels, dims[1])

    if dims[2] % config.multiple or dims[3] % config.multiple:
        raise err.indivisible_input(dims, config.multiple)


def forward_logits(model: ModelGraph, params: ParameterRegistry, x: Tensor, mode: Mode = Mode.eval) -> Tensor:
    """Pre-sigmoid output; training folds the sigmoid into the loss."""
    check_input(model, x.dims)
    outputs: dict[str, Tensor] = {INPUT: x}

    for node in model:
        if node.kind is NodeKind.sigmoid:
            continue

        inputs = [outputs[name] for name in node.inputs]
        view = ParamView(params, node.name)

        match node.kind:
            case NodeKind.block:
                assert node.block is not None
                outputs[node.name] = node.block.forward(inputs[0], view, mode)

            case NodeKind.pool:
                outputs[node.name] = maxpool2d(inputs[0])

            case NodeKind.up:
                assert node.conv is not None
                outputs[node.name] = conv_transpose2d(inputs[0], view["w"], view["b"], node.conv)

            case NodeKind.concat:
                outputs[node.name] = concat_channels(inputs)

            case NodeKind.head:
                assert node.conv is not None
                outputs[node.name] = conv2d(inputs[0], view["w"], view["b"], node.conv)

    return outputs["head"]


def forward(model: ModelGraph, params: ParameterRegistry, x: Tensor, mode: Mode = Mode.eval) -> Tensor:
    """Probability map in (0, 1) with the input's spatial extents."""
    return sigmoid(forward_logits(model, params, x, mode))


def layers(model: ModelGraph, dims: Dims) -> list[Layer]:
    """Static walk of every primitive stage at the given input dims."""
    check_input(model, dims)
    shapes: dict[str, Dims] = {INPUT: dims}
    walk: list[Layer] = []

    for node in model:
        inputs = [shapes[name] for name in node.inputs]
        out = _node_dims(node, inputs)
        shapes[node.name] = out

        match node.kind:
            case NodeKind.block:
                assert node.block is not None
                walk += node.block.layers(node.name, inputs[0])

            case NodeKind.pool:
                walk.append(Layer(node.name, LayerKind.maxpool, inputs[0], out))

            case NodeKind.up:
                walk.append(Layer(node.name, LayerKind.conv_transpose, inputs[0], out, node.conv))

            case NodeKind.concat:
                walk.append(elementwise(node.name, LayerKind.concat, out))

            case NodeKind.head:
                walk.append(Layer(node.name, LayerKind.conv, inputs[0], out, node.conv))

            case NodeKind.sigmoid:
                walk.append(elementwise(node.name, LayerKind.sigmoid, out))

    return walk
