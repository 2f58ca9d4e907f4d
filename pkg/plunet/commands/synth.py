from __future__ import annotations

from pathlib import Path

from plunet.data import save_sample, synth_generate


def synth_dataset(out: Path, count: int, size: tuple[int, int], seed: int) -> list[Path]:
    """Write `count` image/mask pairs to `out`; returns every written path."""
    written: list[Path] = []
    for sample in synth_generate(count, *size, seed=seed):
        written += save_sample(sample, out)

    return written
