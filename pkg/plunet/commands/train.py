from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

from plunet.arch import preset, scaled
from plunet.metrics import AggregateReport
from plunet.train import TrainConfig, TrainResult, apply_overrides, evaluate, parse_train_config, train


@dataclass(frozen=True)
class TrainOutcome:
    result: TrainResult
    test: AggregateReport | None


def load_train_config(
    path: Path | None, arch: str | None = None, width_scale: int | None = None, **overrides: Any
) -> TrainConfig:
    """TOML file (or defaults) with CLI overrides; `arch` and `width_scale` rebuild the architecture."""
    config = TrainConfig() if path is None else parse_train_config(path)

    if arch is not None or width_scale is not None:
        base = preset(arch if arch is not None else config.arch.variant, config.arch.in_channels)
        overrides["arch"] = scaled(base, width_scale or 1)

    return apply_overrides(config, **overrides)


def _test_report(config: TrainConfig, result: TrainResult) -> AggregateReport | None:
    if not result.split.test:
        return None

    return evaluate(result.best, result.split.test, config.threshold)


def run_training(config: TrainConfig, *, resume_from: Path | None = None, verbose: bool = True) -> TrainOutcome:
    """Train, then score the retained best checkpoint on the held-out test split."""
    result = train(config, resume_from=resume_from, verbose=verbose)
    return TrainOutcome(result, _test_report(config, result))
