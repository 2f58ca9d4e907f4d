from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

import plunet.errors as err
from plunet.engine import DType, Tensor


@dataclass(frozen=True)
class Sample:
    """image (1, C, H, W) in [0, 1], mask (1, 1, H, W) in {0, 1}"""

    id: str
    image: Tensor
    mask: Tensor

    def __post_init__(self) -> None:
        if self.image.dims[0] != 1 or self.mask.dims[:2] != (1, 1):
            raise err.shape_mismatch("sample", f"image {self.image.dims}, mask {self.mask.dims}")

        if self.image.dims[2:] != self.mask.dims[2:]:
            raise err.size_mismatch(self.id, self.image.dims[2:], self.mask.dims[2:])

        if not np.isin(self.mask.data, (0, 1)).all():
            raise err.non_binary_mask(self.id)

    @property
    def channels(self) -> int:
        return self.image.dims[1]

    @property
    def size(self) -> tuple[int, int]:
        return self.image.dims[2], self.image.dims[3]


def stack(samples: Sequence[Sample], dtype: DType = DType.f32) -> tuple[Tensor, Tensor]:
    """Batch images and masks along N."""
    if not samples:
        raise err.no_samples("stack a batch")

    images = np.concatenate([s.image.data for s in samples], axis=0).astype(dtype.numpy)
    masks = np.concatenate([s.mask.data for s in samples], axis=0).astype(dtype.numpy)
    return Tensor(images), Tensor(masks)
