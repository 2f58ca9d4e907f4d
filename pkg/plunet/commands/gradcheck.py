"""
Finite-difference checks of every differentiable primitive and of each composite block, in f64 on small inputs.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import Any

import numpy as np

import plunet.errors as err
from plunet.engine import (
    ConvSpec,
    Dims,
    DType,
    GradcheckResult,
    Tensor,
    batchnorm2d,
    concat_channels,
    conv2d,
    conv2d_depthwise_separable,
    conv_transpose2d,
    global_avg_pool,
    gradcheck,
    linear,
    maxpool2d,
    relu,
    scale_channels,
    sigmoid,
)
from plunet.names import BlockKind, Mode
from plunet.nn.blocks import BlockSpec, make_block
from plunet.nn.params import ParameterRegistry, ParamKind

BLOCK_CHECKS = 48

type Check = Callable[[int], GradcheckResult]


def _tensor(rng: np.random.Generator, dims: Dims, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, dims), requires_grad=True)


def _away_from_zero(rng: np.random.Generator, dims: Dims) -> Tensor:
    """Values in [-1, -0.1] u [0.1, 1], away from the ReLU kink."""
    magnitude = rng.uniform(0.1, 1.0, dims)
    return Tensor(np.where(rng.random(dims) < 0.5, -magnitude, magnitude), requires_grad=True)


def _distinct(rng: np.random.Generator, dims: Dims) -> Tensor:
    """A permutation of well separated values, so that no window maximum is tied."""
    values = rng.permutation(np.prod(dims)).reshape(dims) * 0.01
    return Tensor(values.astype(np.float64), requires_grad=True)


def _check(
    target: str, fn: Callable[[], Tensor], tensors: Sequence[Tensor], seed: int, **kwargs: Any
) -> GradcheckResult:
    return gradcheck(fn, tensors, target=target, seed=seed, **kwargs)


# region primitives
def _conv(spec: ConvSpec, dims: Dims, target: str) -> Check:
    def run(seed: int) -> GradcheckResult:
        rng = np.random.default_rng(seed)
        x, w, b = _tensor(rng, dims), _tensor(rng, spec.weight_dims), _tensor(rng, (1, spec.out_channels, 1, 1))
        return _check(target, lambda: conv2d(x, w, b, spec), [x, w, b], seed)

    return run


def _depthwise_separable(seed: int) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    spec = ConvSpec.same(3, 4, dilation=2)
    x = _tensor(rng, (2, 3, 6, 6))
    w_depth, w_point = _tensor(rng, (3, 1, 3, 3)), _tensor(rng, (4, 3, 1, 1))
    b_depth, b_point = _tensor(rng, (1, 3, 1, 1)), _tensor(rng, (1, 4, 1, 1))
    return _check(
        "conv2d_depthwise_separable",
        lambda: conv2d_depthwise_separable(x, w_depth, w_point, spec, b_depth, b_point),
        [x, w_depth, w_point, b_depth, b_point],
        seed,
    )


def _conv_transpose(seed: int) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    spec = ConvSpec.make(4, 2, 2, stride=2)
    x, w, b = _tensor(rng, (2, 4, 3, 3)), _tensor(rng, (4, 2, 2, 2)), _tensor(rng, (1, 2, 1, 1))
    return _check("conv_transpose2d", lambda: conv_transpose2d(x, w, b, spec), [x, w, b], seed)


def _batchnorm(mode: Mode) -> Check:
    def run(seed: int) -> GradcheckResult:
        rng = np.random.default_rng(seed)
        x = _tensor(rng, (3, 2, 4, 4))
        gamma, beta = _tensor(rng, (1, 2, 1, 1), 0.5, 1.5), _tensor(rng, (1, 2, 1, 1))
        mean = Tensor(rng.uniform(-0.2, 0.2, (1, 2, 1, 1)))
        var = Tensor(rng.uniform(0.5, 1.5, (1, 2, 1, 1)))
        return _check(
            f"batchnorm2d_{mode}", lambda: batchnorm2d(x, gamma, beta, mean, var, mode), [x, gamma, beta], seed
        )

    return run


def _unary(name: str, op: Callable[[Tensor], Tensor], make: Callable[[np.random.Generator, Dims], Tensor]) -> Check:
    def run(seed: int) -> GradcheckResult:
        x = make(np.random.default_rng(seed), (2, 3, 4, 4))
        return _check(name, lambda: op(x), [x], seed)

    return run


def _concat(seed: int) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    a, b = _tensor(rng, (2, 1, 3, 3)), _tensor(rng, (2, 3, 3, 3))
    return _check("concat_channels", lambda: concat_channels([a, b]), [a, b], seed)


def _linear(seed: int) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    x, w, b = _tensor(rng, (3, 5, 1, 1)), _tensor(rng, (4, 5, 1, 1)), _tensor(rng, (1, 4, 1, 1))
    return _check("linear", lambda: linear(x, w, b), [x, w, b], seed)


def _scale(seed: int) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    x, s = _tensor(rng, (2, 3, 4, 4)), _tensor(rng, (2, 3, 1, 1), 0.1, 0.9)
    return _check("scale_channels", lambda: scale_channels(x, s), [x, s], seed)


# endregion


# region blocks
def block_registry(spec: BlockSpec, seed: int) -> ParameterRegistry:
    """
    f64 parameters for a finite-difference check. Batch-norm shifts are large against their scales and the SE
    squeeze stage gets small weights over a positive bias, so every ReLU input stays well above zero.
    """
    block = make_block(spec)
    registry = ParameterRegistry.initialize(block.param_specs(""), seed, DType.f64)
    rng = np.random.default_rng(seed + 1)
    for name, param_spec in registry.specs.items():
        data = registry[name].data
        match param_spec.kind:
            case ParamKind.gamma:
                data[...] = rng.uniform(0.2, 0.4, data.shape)
            case ParamKind.beta:
                data[...] = rng.uniform(2.5, 3.0, data.shape)
            case ParamKind.weight if name.endswith("fc1.w"):
                data[...] = rng.uniform(-0.05, 0.05, data.shape)
            case ParamKind.bias if name.endswith("fc1.b"):
                data[...] = rng.uniform(1.0, 1.5, data.shape)
            case ParamKind.bias:
                data[...] = rng.uniform(-0.2, 0.2, data.shape)
            case _:
                pass

    return registry


def _block(kind: BlockKind, in_channels: int, out_channels: int, **kwargs: Any) -> Check:
    def run(seed: int) -> GradcheckResult:
        spec = BlockSpec(kind, in_channels, out_channels, se_reduction=2, **kwargs)
        block = make_block(spec)
        registry = block_registry(spec, seed)
        x = _tensor(np.random.default_rng(seed), (2, in_channels, 6, 6))

        def fn() -> Tensor:
            return block.forward(x, registry.view(), Mode.train)

        return _check(str(kind), fn, [x, *registry.learnable.values()], seed, max_checks=BLOCK_CHECKS)

    return run


# endregion


OPS: dict[str, Check] = {
    "conv2d": _conv(ConvSpec.make(3, 4, 3, padding=1), (2, 3, 5, 5), "conv2d"),
    "conv2d_dilated": _conv(ConvSpec.same(2, 3, dilation=3), (2, 2, 7, 7), "conv2d_dilated"),
    "conv2d_strided": _conv(ConvSpec.make(2, 3, 3, stride=2, padding=1), (2, 2, 7, 6), "conv2d_strided"),
    "conv2d_grouped": _conv(ConvSpec.make(4, 6, 3, padding=1, groups=2), (2, 4, 5, 5), "conv2d_grouped"),
    "conv2d_depthwise_separable": _depthwise_separable,
    "conv_transpose2d": _conv_transpose,
    "batchnorm2d_train": _batchnorm(Mode.train),
    "batchnorm2d_eval": _batchnorm(Mode.eval),
    "relu": _unary("relu", relu, _away_from_zero),
    "sigmoid": _unary("sigmoid", sigmoid, _tensor),
    "maxpool2d": _unary("maxpool2d", maxpool2d, _distinct),
    "global_avg_pool": _unary("global_avg_pool", global_avg_pool, _tensor),
    "concat_channels": _concat,
    "linear": _linear,
    "scale_channels": _scale,
}

BLOCKS: dict[str, Check] = {
    "conv_block": _block(BlockKind.conv_block, 2, 4),
    "se": _block(BlockKind.se, 4, 4),
    "lg": _block(BlockKind.lg, 2, 4),
    "ls": _block(BlockKind.ls, 2, 4),
    "ps": _block(BlockKind.ps, 2, 4),
}

SCOPES = ("all", "ops", "blocks", *OPS, *BLOCKS)


def resolve(scope: str) -> dict[str, Check]:
    match scope:
        case "all":
            return OPS | BLOCKS
        case "ops":
            return OPS
        case "blocks":
            return BLOCKS
        case _ if scope in OPS:
            return {scope: OPS[scope]}
        case _ if scope in BLOCKS:
            return {scope: BLOCKS[scope]}
        case _:
            raise err.option_unknown_scope(scope, SCOPES)


def run_gradcheck(scope: str = "all", seed: int = 0) -> list[GradcheckResult]:
    return [check(seed) for check in resolve(scope).values()]
