from __future__ import annotations

from pathlib import Path

from plunet.analysis import CostReport, cost_report
from plunet.arch import ArchConfig, build, preset
from plunet.engine import Dims
from plunet.names import FlopConvention


def resolve_arch(arch: str, config: Path | None, dims: Dims) -> ArchConfig:
    """A JSON config file wins over the preset name; presets take their input channels from `dims`."""
    if config is not None:
        return ArchConfig.load(config)

    return preset(arch, in_channels=dims[1])


def describe(
    arch: str, config: Path | None, dims: Dims, convention: FlopConvention = FlopConvention.TWO_MACS
) -> CostReport:
    return cost_report(build(resolve_arch(arch, config, dims)), dims, convention)
