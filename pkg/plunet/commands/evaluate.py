from __future__ import annotations

from pathlib import Path

from plunet.data import load_dir
from plunet.metrics import AggregateReport
from plunet.names import Aggregation
from plunet.train import evaluate, load_checkpoint


def evaluate_checkpoint(
    ckpt: Path, data: Path, threshold: float, mode: Aggregation = Aggregation.per_image, strict: bool = True
) -> AggregateReport:
    return evaluate(load_checkpoint(ckpt), load_dir(data, strict=strict), threshold, mode)
