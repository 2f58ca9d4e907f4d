from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

import plunet.errors as err
from plunet.engine import Tensor


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: npt.NDArray[Any]  # d(loss)/d(logits), same dims and dtype as the logits


def bce_loss(logits: Tensor, target: Tensor) -> LossResult:
    """
    Binary cross-entropy of sigmoid(logits) against {0, 1} targets, averaged over every pixel, computed as
    mean(max(z, 0) - z*y + log(1 + exp(-|z|))).
    """
    if logits.dims != target.dims:
        raise err.shape_mismatch("bce_loss", f"logits {logits.dims} vs target {target.dims}")

    z, y = logits.data, target.data.astype(logits.data.dtype)
    if not np.isin(y, (0, 1)).all():
        raise err.non_binary_mask("bce target")

    count = z.size
    value = float((np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))).sum() / count)

    decay = np.exp(-np.abs(z))
    prob = np.where(z >= 0, 1 / (1 + decay), decay / (1 + decay))
    return LossResult(value, ((prob - y) / count).astype(z.dtype))
