from __future__ import annotations

from pathlib import Path

import numpy as np

from plunet.data import read_netpbm, save_mask
from plunet.data.netpbm import MAXVAL
from plunet.engine import Tensor
from plunet.train import Checkpoint, predict


def predict_image(checkpoint: Checkpoint, image: Path, out: Path, threshold: float) -> Tensor:
    """Segment one PPM/PGM image and write the binary mask as a PGM."""
    pixels = read_netpbm(image)
    x = Tensor((pixels.astype(checkpoint.params.dtype.numpy) / MAXVAL)[None])

    mask = predict(checkpoint.model, checkpoint.params, x, threshold)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mask(mask, out)
    return mask


def mask_foreground(mask: Tensor) -> float:
    return float(np.mean(mask.data))
