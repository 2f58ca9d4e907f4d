from plunet.nn.blocks import (
    Block,
    BlockSpec,
    ConvBlock,
    LGBlock,
    LSBlock,
    PSModule,
    SEBlock,
    conv_block_forward,
    lg_forward,
    ls_forward,
    make_block,
    ps_forward,
    se_forward,
)
from plunet.nn.layers import Layer, LayerKind
from plunet.nn.params import ParameterRegistry, ParamKind, ParamSpec, ParamView

__all__ = [
    "Block",
    "BlockSpec",
    "ConvBlock",
    "LGBlock",
    "LSBlock",
    "Layer",
    "LayerKind",
    "PSModule",
    "ParamKind",
    "ParamSpec",
    "ParamView",
    "ParameterRegistry",
    "SEBlock",
    "conv_block_forward",
    "lg_forward",
    "ls_forward",
    "make_block",
    "ps_forward",
    "se_forward",
]
