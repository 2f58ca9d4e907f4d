"""
Pixel-count segmentation metrics. SR is the segmentation result, GT the ground truth.

    PC = TP / (TP + FP)           precision
    SE = TP / (TP + FN)           sensitivity (recall)
    F1 = 2TP / (2TP + FP + FN)    Dice
    JS = TP / (TP + FP + FN)      Jaccard

When both SR and GT are empty every metric is 1; any other zero denominator gives 0.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

import plunet.errors as err
from plunet.engine import Tensor
from plunet.names import Aggregation

DEFAULT_THRESHOLD = 0.5

type Mask = npt.NDArray[np.bool_]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    pc: float
    se: float
    f1: float
    js: float


@dataclass(frozen=True)
class AggregateReport:
    n_images: int
    mode: Aggregation
    scores: MetricsReport

    def to_dict(self) -> dict[str, Any]:
        return dict(
            n_images=self.n_images,
            mode=str(self.mode),
            pc=self.scores.pc,
            se=self.scores.se,
            f1=self.scores.f1,
            js=self.scores.js,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _as_mask(mask: Tensor | npt.NDArray[Any], where: str) -> Mask:
    data = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    if data.dtype == np.bool_:
        return data

    if not np.isin(data, (0, 1)).all():
        raise err.non_binary_mask(where)

    return data.astype(np.bool_)


def binarize(pred: Tensor, threshold: float = DEFAULT_THRESHOLD) -> Tensor:
    """pixel >= threshold -> 1, else 0; same dims and dtype as pred."""
    if not 0.0 < threshold < 1.0:
        err.assert_option(err.Raise("threshold", threshold, expected="in range (0, 1)"))

    return pred.with_data((pred.data >= threshold).astype(pred.data.dtype))


def confusion(sr: Tensor | npt.NDArray[Any], gt: Tensor | npt.NDArray[Any]) -> ConfusionCounts:
    sr_mask, gt_mask = _as_mask(sr, "segmentation result"), _as_mask(gt, "ground truth")
    if sr_mask.shape != gt_mask.shape:
        raise err.shape_mismatch("confusion", f"{sr_mask.shape} vs {gt_mask.shape}")

    tp = int(np.count_nonzero(sr_mask & gt_mask))
    fp = int(np.count_nonzero(sr_mask & ~gt_mask))
    fn = int(np.count_nonzero(~sr_mask & gt_mask))
    return ConfusionCounts(tp, fp, sr_mask.size - tp - fp - fn, fn)


def confusion_per_image(sr: Tensor, gt: Tensor) -> list[ConfusionCounts]:
    """One tally per batch element of (N, 1, H, W) masks."""
    if sr.dims != gt.dims:
        raise err.shape_mismatch("confusion", f"{sr.dims} vs {gt.dims}")

    return [confusion(sr.data[i], gt.data[i]) for i in range(sr.dims[0])]


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def metrics(c: ConfusionCounts) -> MetricsReport:
    if c.tp + c.fp + c.fn == 0:
        return MetricsReport(1.0, 1.0, 1.0, 1.0)

    return MetricsReport(
        pc=_ratio(c.tp, c.tp + c.fp),
        se=_ratio(c.tp, c.tp + c.fn),
        f1=_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        js=_ratio(c.tp, c.tp + c.fp + c.fn),
    )


def aggregate(counts: Sequence[ConfusionCounts], mode: Aggregation = Aggregation.per_image) -> AggregateReport:
    """per_image: mean of per-image metrics, summed left to right; global: metrics of the pooled counts."""
    if not counts:
        raise err.no_samples("aggregate metrics")

    match mode:
        case Aggregation.per_image:
            reports = [metrics(c) for c in counts]
            n = len(reports)
            scores = MetricsReport(
                pc=sum(r.pc for r in reports) / n,
                se=sum(r.se for r in reports) / n,
                f1=sum(r.f1 for r in reports) / n,
                js=sum(r.js for r in reports) / n,
            )

        case Aggregation.global_:
            pooled = counts[0]
            for c in counts[1:]:
                pooled = pooled + c
            scores = metrics(pooled)

    return AggregateReport(len(counts), mode, scores)
