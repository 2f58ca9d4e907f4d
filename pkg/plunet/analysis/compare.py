from __future__ import annotations

from dataclasses import dataclass

from plunet.names import BlockKind
from plunet.nn.blocks import PS_DILATIONS, BlockSpec, PSModule
from plunet.nn.params import ParamKind, ParamSpec


@dataclass(frozen=True)
class Reduction:
    """Parameter totals of an ordinary-convolution ASPP and of the PS module in the same topology, SE excluded."""

    in_channels: int
    out_channels: int
    aspp_params: int
    ps_params: int
    aspp_branch_weights: int
    ps_branch_weights: int

    @property
    def module_ratio(self) -> float:
        return self.aspp_params / self.ps_params

    @property
    def branch_ratio(self) -> float:
        """Branch kernels only, no biases."""
        return self.aspp_branch_weights / self.ps_branch_weights


def _learnable(specs: list[ParamSpec]) -> int:
    return sum(spec.size for spec in specs if spec.kind.learnable)


def _branch_weights(specs: list[ParamSpec]) -> int:
    return sum(spec.size for spec in specs if spec.kind is ParamKind.weight and spec.name.startswith("branch"))


def compare_ps_vs_aspp(
    in_channels: int, out_channels: int, dilations: tuple[int, ...] = PS_DILATIONS
) -> Reduction:
    def specs(separable: bool) -> list[ParamSpec]:
        spec = BlockSpec(
            BlockKind.ps, in_channels, out_channels, dilations=dilations, separable=separable, attention=False
        )
        block = PSModule(spec)
        return block.param_specs("")

    aspp, ps = specs(separable=False), specs(separable=True)
    return Reduction(
        in_channels,
        out_channels,
        aspp_params=_learnable(aspp),
        ps_params=_learnable(ps),
        aspp_branch_weights=_branch_weights(aspp),
        ps_branch_weights=_branch_weights(ps),
    )
