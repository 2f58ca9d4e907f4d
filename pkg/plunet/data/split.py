from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

import plunet.errors as err
from plunet.data.sample import Sample

MIN_SAMPLES = 5


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.60
    val: float = 0.20
    test: float = 0.20
    seed: int = 42

    def __post_init__(self) -> None:
        fractions = (self.train, self.val, self.test)
        if min(fractions) <= 0 or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
            raise err.invalid_fractions(fractions)


class Split(NamedTuple):
    train: list[Sample]
    val: list[Sample]
    test: list[Sample]


def shuffled[T](items: Sequence[T], rng: np.random.Generator) -> list[T]:
    """Fisher-Yates shuffle driven by rng."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]

    return out


def split(samples: Sequence[Sample], spec: SplitSpec = SplitSpec()) -> Split:
    """Seeded shuffle, then cuts at floor(train*n) and floor((train+val)*n); the remainder goes to test."""
    n = len(samples)
    if n < MIN_SAMPLES:
        raise err.too_few_samples(n, MIN_SAMPLES)

    order = shuffled(samples, np.random.default_rng(spec.seed))
    first = math.floor(spec.train * n + 1e-9)
    second = math.floor((spec.train + spec.val) * n + 1e-9)
    parts = Split(order[:first], order[first:second], order[second:])

    ids = [{s.id for s in part} for part in parts]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2]), "sample ids leak across splits"

    return parts
