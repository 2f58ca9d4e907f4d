from plunet.engine.gradcheck import GradcheckResult, gradcheck
from plunet.engine.ops import (
    batchnorm2d,
    concat_channels,
    conv2d,
    conv2d_depthwise_separable,
    conv_transpose2d,
    global_avg_pool,
    linear,
    maxpool2d,
    relu,
    scale_channels,
    sigmoid,
)
from plunet.engine.spec import ConvSpec
from plunet.engine.tape import GradTape, Gradients, backward
from plunet.engine.tensor import Dims, DType, Tensor, decode_tensor, encode_tensor

__all__ = [
    "ConvSpec",
    "Dims",
    "DType",
    "GradTape",
    "GradcheckResult",
    "Gradients",
    "Tensor",
    "backward",
    "batchnorm2d",
    "concat_channels",
    "conv2d",
    "conv2d_depthwise_separable",
    "conv_transpose2d",
    "decode_tensor",
    "encode_tensor",
    "global_avg_pool",
    "gradcheck",
    "linear",
    "maxpool2d",
    "relu",
    "scale_channels",
    "sigmoid",
]
