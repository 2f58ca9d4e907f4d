from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt

import plunet.errors as err
from plunet.data.sample import Sample
from plunet.engine import Tensor

MIN_SIZE = 32
NOISE_SIGMA = 0.08
FOREGROUND_RANGE = (0.02, 0.60)
CHANNELS = 3


def _ellipses(
    rng: np.random.Generator, height: int, width: int
) -> tuple[npt.NDArray[np.bool_], npt.NDArray[np.float64]]:
    """Union of 1 to 3 filled ellipses and, inside it, a smooth ramp peaking at each center."""
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    mask = np.zeros((height, width), dtype=np.bool_)
    ramp = np.zeros((height, width))

    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        a = rng.uniform(height / 8, height / 3)
        b = rng.uniform(width / 8, width / 3)
        theta = rng.uniform(0, math.pi)

        dy, dx = rows - cy, cols - cx
        u = (dy * math.cos(theta) + dx * math.sin(theta)) / a
        v = (-dy * math.sin(theta) + dx * math.cos(theta)) / b
        r2 = u * u + v * v

        inside = r2 <= 1.0
        mask |= inside
        ramp = np.maximum(ramp, np.where(inside, 1.0 - r2, 0.0))

    return mask, ramp


def synth_sample(rng: np.random.Generator, height: int, width: int, sample_id: str) -> Sample:
    while True:
        mask, ramp = _ellipses(rng, height, width)
        if FOREGROUND_RANGE[0] <= mask.mean() <= FOREGROUND_RANGE[1]:
            break

    background = rng.uniform(0.05, 0.35)
    foreground = rng.uniform(0.55, 0.85)
    tint = rng.uniform(0.85, 1.0, size=(CHANNELS, 1, 1))

    intensity = np.where(mask, foreground + 0.15 * ramp, background)
    image = tint * intensity + rng.normal(0.0, NOISE_SIGMA, size=(CHANNELS, height, width))

    return Sample(
        sample_id,
        Tensor(np.clip(image, 0.0, 1.0).astype(np.float32)[None]),
        Tensor(mask.astype(np.float32)[None, None]),
    )


def synth_generate(count: int, height: int, width: int, seed: int) -> list[Sample]:
    """
    Noisy RGB images of 1 to 3 bright ellipses (axes in [H/8, H/3]) on a darker background, paired with the
    ellipse-union mask. Every mask covers between 2% and 60% of the image; the dataset depends only on the seed.
    """
    if height < MIN_SIZE or width < MIN_SIZE:
        raise err.degenerate_dims(height, width, MIN_SIZE)

    rng = np.random.default_rng(seed)
    return [synth_sample(rng, height, width, f"synth_{i:05d}") for i in range(count)]
