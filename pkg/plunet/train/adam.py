from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

import plunet.errors as err
from plunet.engine import Tensor

type Array = npt.NDArray[Any]


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 3e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        err.assert_option(err.IsGreater("lr", self.lr, 0.0, strict=True))
        err.assert_option(err.IsInRange("beta1", self.beta1, 0.0, 1.0))
        err.assert_option(err.IsInRange("beta2", self.beta2, 0.0, 1.0))
        err.assert_option(err.IsGreater("eps", self.eps, 0.0, strict=True))


@dataclass
class AdamState:
    """First and second moment estimates per parameter name, and the number of steps taken."""

    step: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)

    def copy(self) -> AdamState:
        return AdamState(
            self.step, {k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()}
        )


def adam_step(
    params: Mapping[str, Tensor], grads: Mapping[str, Array], state: AdamState, config: AdamConfig = AdamConfig()
) -> AdamState:
    """
    One bias-corrected Adam update at t = state.step + 1, applied in place to the parameter data and moments:

        m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
        theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """
    state.step += 1
    t = state.step
    correction1 = 1.0 - config.beta1**t
    correction2 = 1.0 - config.beta2**t

    for name, param in params.items():
        grad = grads[name]
        m = state.m.setdefault(name, np.zeros_like(param.data))
        v = state.v.setdefault(name, np.zeros_like(param.data))
        if not (grad.shape == m.shape == v.shape == param.data.shape):
            raise err.optimizer_shape_mismatch(name)

        m *= config.beta1
        m += (1.0 - config.beta1) * grad
        v *= config.beta2
        v += (1.0 - config.beta2) * grad * grad

        param.data -= config.lr * (m / correction1) / (np.sqrt(v / correction2) + config.eps)

    return state
