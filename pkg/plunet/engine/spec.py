from __future__ import annotations

from dataclasses import dataclass

import plunet.errors as err
from plunet.engine.tensor import Dims

type Pair = tuple[int, int]


def _pair(value: int | Pair) -> Pair:
    return (value, value) if isinstance(value, int) else (value[0], value[1])


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: Pair = (3, 3)
    stride: Pair = (1, 1)
    padding: Pair = (0, 0)
    dilation: Pair = (1, 1)
    groups: int = 1
    bias: bool = True

    def __post_init__(self) -> None:
        if self.in_channels < 1 or self.out_channels < 1 or self.groups < 1:
            raise err.invalid_groups(self.in_channels, self.out_channels, self.groups)

        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise err.invalid_groups(self.in_channels, self.out_channels, self.groups)

        for name, pair, low in (("kernel", self.kernel, 1), ("stride", self.stride, 1), ("dilation", self.dilation, 1),
                                ("padding", self.padding, 0)):
            if min(pair) < low:
                raise err.unsupported_configuration("conv2d", f"{name} {pair} must be >= {low}")

    @classmethod
    def make(
        cls,
        in_channels: int,
        out_channels: int,
        kernel: int | Pair = 3,
        *,
        stride: int | Pair = 1,
        padding: int | Pair = 0,
        dilation: int | Pair = 1,
        groups: int = 1,
        bias: bool = True,
    ) -> ConvSpec:
        return cls(
            in_channels, out_channels, _pair(kernel), _pair(stride), _pair(padding), _pair(dilation), groups, bias
        )

    @classmethod
    def same(cls, in_channels: int, out_channels: int, *, dilation: int = 1, groups: int = 1) -> ConvSpec:
        """3x3, stride 1, padding = dilation: spatial size is preserved."""
        return cls.make(in_channels, out_channels, 3, padding=dilation, dilation=dilation, groups=groups)

    @classmethod
    def pointwise(cls, in_channels: int, out_channels: int) -> ConvSpec:
        return cls.make(in_channels, out_channels, 1)

    @property
    def extent(self) -> Pair:
        """Effective kernel extent d*(k-1)+1 per axis."""
        return (
            self.dilation[0] * (self.kernel[0] - 1) + 1,
            self.dilation[1] * (self.kernel[1] - 1) + 1,
        )

    @property
    def weight_dims(self) -> Dims:
        return (self.out_channels, self.in_channels // self.groups, self.kernel[0], self.kernel[1])

    @property
    def fan_in(self) -> int:
        return self.in_channels // self.groups * self.kernel[0] * self.kernel[1]

    def output_dims(self, dims: Dims, op: str = "conv2d") -> Dims:
        n, c, h, w = dims
        if c != self.in_channels:
            raise err.shape_mismatch(op, f"input has {c} channels, spec expects {self.in_channels}")

        h_out = (h + 2 * self.padding[0] - self.extent[0]) // self.stride[0] + 1
        w_out = (w + 2 * self.padding[1] - self.extent[1]) // self.stride[1] + 1
        if h_out < 1 or w_out < 1:
            raise err.empty_output(op, (n, self.out_channels, h_out, w_out))

        return (n, self.out_channels, h_out, w_out)
