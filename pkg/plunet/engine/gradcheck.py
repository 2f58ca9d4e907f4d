from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from plunet.engine.tape import GradTape, backward
from plunet.engine.tensor import DType, Tensor

STEP = 1e-5
TOLERANCE = 1e-5


@dataclass(frozen=True)
class GradcheckResult:
    target: str
    max_rel_error: float
    tolerance: float
    checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|analytic - numeric| / max(max|numeric|, 1e-8)"""
    scale = max(float(np.abs(numeric).max(initial=0.0)), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0)) / scale


def gradcheck(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    *,
    target: str = "",
    seed: int = 0,
    step: float = STEP,
    tolerance: float = TOLERANCE,
    max_checks: int | None = None,
) -> GradcheckResult:
    """
    Compare tape gradients of the scalar L = sum(fn() * P), P a fixed random projection in [-1, 1], against central
    differences on every element (or `max_checks` sampled elements) of each tensor. Tensors must be f64 and are
    perturbed in place, then restored.
    """
    for tensor in tensors:
        assert tensor.dtype is DType.f64, "gradcheck requires f64 tensors"

    rng = np.random.default_rng(seed)

    with GradTape() as tape:
        output = fn()

    projection = rng.uniform(-1.0, 1.0, output.dims)
    grads = backward(tape, projection, output=output, wrt=tensors)

    def loss() -> float:
        return float((fn().data * projection).sum())

    worst = 0.0
    checked = 0
    for tensor in tensors:
        flat = tensor.data.reshape(-1)
        if max_checks is not None and flat.size > max_checks:
            indices = np.sort(rng.choice(flat.size, size=max_checks, replace=False))
        else:
            indices = np.arange(flat.size)

        numeric = np.empty(indices.size)
        for k, index in enumerate(indices):
            original = flat[index]
            flat[index] = original + step
            upper = loss()
            flat[index] = original - step
            lower = loss()
            flat[index] = original
            numeric[k] = (upper - lower) / (2 * step)

        analytic = grads[tensor].reshape(-1)[indices]
        worst = max(worst, relative_error(analytic, numeric))
        checked += indices.size

    return GradcheckResult(target, worst, tolerance, checked)
