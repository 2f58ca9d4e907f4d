from plunet.train.adam import AdamConfig, AdamState, adam_step
from plunet.train.checkpoint import (
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from plunet.train.config import DataSource, TrainConfig, apply_overrides, parse_train_config
from plunet.train.loop import TrainResult, evaluate, evaluate_params, predict, resume, train, train_step

__all__ = [
    "AdamConfig",
    "AdamState",
    "Checkpoint",
    "DataSource",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "apply_overrides",
    "decode_checkpoint",
    "encode_checkpoint",
    "evaluate",
    "evaluate_params",
    "load_checkpoint",
    "parse_train_config",
    "predict",
    "resume",
    "save_checkpoint",
    "train",
    "train_step",
]
