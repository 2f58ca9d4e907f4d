from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

import plunet.errors as err
from plunet.arch import ModelGraph, build, forward, forward_logits, init_params
from plunet.data import Sample, Split, split, stack
from plunet.data.split import shuffled
from plunet.engine import GradTape, Tensor, backward
from plunet.metrics import AggregateReport, aggregate, bce_loss, binarize, confusion_per_image
from plunet.metrics.scores import DEFAULT_THRESHOLD
from plunet.names import Aggregation, Mode
from plunet.nn.params import ParameterRegistry
from plunet.train.adam import AdamState, adam_step
from plunet.train.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from plunet.train.config import TrainConfig
from plunet.utils.console import INFO_STYLE, console_err
from plunet.utils.progress import Bar, NoBar

EVAL_BATCH = 8
NO_SCORE = -math.inf


@dataclass(frozen=True)
class TrainResult:
    last: Checkpoint
    best: Checkpoint
    log: list[dict[str, Any]]
    split: Split


def batches[T](items: Sequence[T], size: int) -> list[Sequence[T]]:
    """Consecutive slices of `size`; the last one may be shorter."""
    return [items[i : i + size] for i in range(0, len(items), size)]


def check_channels(checkpoint_or_model: Checkpoint | ModelGraph, samples: Sequence[Sample]) -> None:
    config = checkpoint_or_model.arch if isinstance(checkpoint_or_model, Checkpoint) else checkpoint_or_model.config
    for sample in samples:
        if sample.channels != config.in_channels:
            raise err.arch_mismatch(
                f"model expects {config.in_channels} input channels, sample '{sample.id}' has {sample.channels}"
            )

        height, width = sample.size
        if height % config.multiple or width % config.multiple:
            raise err.arch_mismatch(
                f"sample '{sample.id}' size {height}x{width} is not a multiple of {config.multiple}"
            )


def train_step(
    model: ModelGraph,
    params: ParameterRegistry,
    state: AdamState,
    config: TrainConfig,
    batch: Sequence[Sample],
    epoch: int = 0,
) -> float:
    """Forward in train mode, BCE on logits, backward, one Adam update; returns the batch loss."""
    images, masks = stack(batch, config.dtype)

    with GradTape() as tape:
        logits = forward_logits(model, params, images, Mode.train)

    loss = bce_loss(logits, masks)
    if not math.isfinite(loss.value):
        raise err.training_diverged(epoch, state.step + 1)

    grads = backward(tape, loss.grad, output=logits)
    learnable = params.learnable
    adam_step(
        learnable,
        {name: g if (g := grads.get(t)) is not None else np.zeros_like(t.data) for name, t in learnable.items()},
        state,
        config.optimizer,
    )
    return loss.value


def predict(
    model: ModelGraph, params: ParameterRegistry, images: Tensor, threshold: float = DEFAULT_THRESHOLD
) -> Tensor:
    """Binary masks of an (N, C, H, W) batch, eval mode."""
    return binarize(forward(model, params, images, Mode.eval), threshold)


def evaluate_params(
    model: ModelGraph,
    params: ParameterRegistry,
    samples: Sequence[Sample],
    threshold: float = DEFAULT_THRESHOLD,
    mode: Aggregation = Aggregation.per_image,
) -> AggregateReport:
    if not samples:
        raise err.no_samples("evaluate")

    check_channels(model, samples)

    counts = []
    for batch in batches(samples, EVAL_BATCH):
        images, masks = stack(batch, params.dtype)
        counts += confusion_per_image(predict(model, params, images, threshold), masks)

    return aggregate(counts, mode)


def evaluate(
    checkpoint: Checkpoint,
    samples: Sequence[Sample],
    threshold: float = DEFAULT_THRESHOLD,
    mode: Aggregation = Aggregation.per_image,
) -> AggregateReport:
    """Eval-mode forward, binarize, per-image confusion counts, aggregate."""
    return evaluate_params(checkpoint.model, checkpoint.params, samples, threshold, mode)


def _extra(config: TrainConfig, best_f1: float) -> dict[str, Any]:
    return dict(best_f1=best_f1, train=config.to_dict())


def _read_log(path: Path, upto_epoch: int) -> list[dict[str, Any]]:
    if not path.exists():
        return []

    entries = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    return [entry for entry in entries if entry["epoch"] <= upto_epoch]


def _write_log(path: Path, entries: list[dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(entry, sort_keys=True) + "\n" for entry in entries))


def _append_log(path: Path, entry: dict[str, Any]) -> None:
    with open(path, "a") as log:
        log.write(json.dumps(entry, sort_keys=True) + "\n")


def train(
    config: TrainConfig,
    *,
    samples: Sequence[Sample] | None = None,
    resume_from: Path | None = None,
    verbose: bool = True,
) -> TrainResult:
    """
    Epoch loop: seeded shuffle of the train split, minibatch steps (the last batch may be short), then an
    eval-mode pass over the validation split. Every epoch appends one JSON line to `<out>/train.jsonl`, writes
    `<out>/last.plw` and, when validation F1 improves, `<out>/best.plw`.

    The shuffle of epoch e draws from default_rng([seed, e]), so resuming from a checkpoint replays the same
    batches as an uninterrupted run.
    """
    if samples is None:
        samples = config.data.load()

    parts = split(samples, config.split)
    if not parts.train:
        raise err.no_samples("train")

    model = build(config.arch)
    check_channels(model, samples)

    if resume_from is not None:
        checkpoint = load_checkpoint(resume_from)
        if checkpoint.arch != config.arch:
            raise err.arch_mismatch("resumed checkpoint was trained with a different architecture")

        params = checkpoint.params
        if params.dtype is not config.dtype:
            params = params.astype(config.dtype)
        state = checkpoint.state
        start = checkpoint.epoch
        best_f1 = float(checkpoint.extra.get("best_f1", NO_SCORE))
        log = _read_log(config.log_path, start)

    else:
        params = init_params(model, config.seed, config.dtype)
        state = AdamState()
        start = 0
        best_f1 = NO_SCORE
        log = []

    # params and state are updated in place from here on
    last = Checkpoint(config.arch, params.copy(), state.copy(), start, _extra(config, best_f1))
    best = load_checkpoint(config.best_path) if resume_from is not None and config.best_path.exists() else last

    _write_log(config.log_path, log)

    for epoch in range(start + 1, config.epochs + 1):
        order = shuffled(parts.train, np.random.default_rng([config.seed, epoch]))
        steps = batches(order, config.batch_size)
        losses: list[float] = []

        bar = Bar(f"epoch {epoch}/{config.epochs}", total=len(steps)) if verbose else NoBar
        with bar:
            for batch in bar.iter(steps):
                losses.append(train_step(model, params, state, config, batch, epoch))
                bar.set_postfix(loss=losses[-1])

        entry: dict[str, Any] = dict(epoch=epoch, step=state.step, train_loss=sum(losses) / len(losses))
        if parts.val:
            report = evaluate_params(model, params, parts.val, config.threshold)
            scores = report.scores
            entry |= dict(val_pc=scores.pc, val_se=scores.se, val_f1=scores.f1, val_js=scores.js)
            f1 = scores.f1
        else:
            # without a validation split the lowest training loss is kept as best
            f1 = -entry["train_loss"]

        improved = f1 > best_f1
        best_f1 = max(best_f1, f1)

        last = Checkpoint(config.arch, params.copy(), state.copy(), epoch, _extra(config, best_f1))
        save_checkpoint(last, config.last_path)
        if improved:
            best = last
            save_checkpoint(best, config.best_path)

        log.append(entry)
        _append_log(config.log_path, entry)

        if verbose:
            summary = " ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in entry.items())
            console_err.print(summary, style=INFO_STYLE)

    return TrainResult(last, best, log, parts)


def resume(config: TrainConfig, checkpoint: Path, *, verbose: bool = True) -> TrainResult:
    """Continue a run from a saved checkpoint up to `config.epochs`."""
    return train(config, resume_from=checkpoint, verbose=verbose)
