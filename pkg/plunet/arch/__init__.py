from plunet.arch.config import ArchConfig, preset, scaled
from plunet.arch.graph import (
    GraphNode,
    ModelGraph,
    NodeKind,
    build,
    check_input,
    forward,
    forward_logits,
    init_params,
    layers,
)

__all__ = [
    "ArchConfig",
    "GraphNode",
    "ModelGraph",
    "NodeKind",
    "build",
    "check_input",
    "forward",
    "forward_logits",
    "init_params",
    "layers",
    "preset",
    "scaled",
]
