"""
Binary Netpbm images: PPM 'P6' (RGB) and PGM 'P5' (grey), maxval 255.

A dataset directory is flat and holds pairs '<id>.ppm' / '<id>_mask.pgm'.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt
from natsort import natsorted

import plunet.errors as err
from plunet.data.sample import Sample
from plunet.engine import Tensor

MAXVAL = 255
MASK_SUFFIX = "_mask"

_HEADER_FIELDS = 4

type Pixels = npt.NDArray[np.uint8]


def _parse_header(raw: bytes, path: Path) -> tuple[bytes, int, int, int, int]:
    """magic, width, height, maxval and the offset of the first pixel byte; '#' comments are skipped."""
    fields: list[bytes] = []
    position = 0
    while len(fields) < _HEADER_FIELDS:
        if position >= len(raw):
            raise err.malformed_header(str(path), "truncated header")

        char = raw[position : position + 1]
        if char.isspace():
            position += 1

        elif char == b"#":
            end = raw.find(b"\n", position)
            position = len(raw) if end < 0 else end + 1

        else:
            start = position
            while position < len(raw) and not raw[position : position + 1].isspace():
                position += 1
            fields.append(raw[start:position])

    magic, *numbers = fields
    if magic not in (b"P5", b"P6") or not all(n.isdigit() for n in numbers):
        raise err.malformed_header(str(path), "expected 'P5' or 'P6', width, height and maxval")

    width, height, maxval = (int(n) for n in numbers)
    # exactly one whitespace byte separates the header from the pixels
    return magic, width, height, maxval, position + 1


def read_netpbm(path: Path) -> Pixels:
    """(C, H, W) uint8 pixels, C = 3 for P6 and 1 for P5."""
    raw = path.read_bytes()
    magic, width, height, maxval, offset = _parse_header(raw, path)

    if maxval != MAXVAL:
        raise err.malformed_header(str(path), f"maxval must be {MAXVAL}, got {maxval}")

    if width < 1 or height < 1:
        raise err.malformed_header(str(path), f"invalid size {width}x{height}")

    channels = 3 if magic == b"P6" else 1
    count = channels * width * height
    data = raw[offset : offset + count]
    if len(data) != count:
        raise err.malformed_header(str(path), f"expected {count} bytes of pixel data, got {len(data)}")

    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, channels).transpose(2, 0, 1).copy()


def write_netpbm(path: Path, pixels: Pixels) -> None:
    channels, height, width = pixels.shape
    if channels not in (1, 3):
        raise err.invalid_tensor(f"cannot write {channels} channels as a Netpbm image")

    magic = b"P6" if channels == 3 else b"P5"
    header = b"%s\n%d %d\n%d\n" % (magic, width, height, MAXVAL)
    path.write_bytes(header + np.ascontiguousarray(pixels.transpose(1, 2, 0)).tobytes())


def to_pixels(values: npt.NDArray[Any]) -> Pixels:
    """[0, 1] floats of shape (C, H, W) to 8-bit."""
    return np.rint(np.clip(values, 0.0, 1.0) * MAXVAL).astype(np.uint8)


def mask_from_pixels(pixels: Pixels, where: str, *, strict: bool = True) -> npt.NDArray[np.float32]:
    """strict: only 0 and 255 are accepted; otherwise a pixel >= 128 is foreground."""
    if strict and not np.isin(pixels, (0, MAXVAL)).all():
        raise err.non_binary_mask(where)

    return (pixels >= 128).astype(np.float32)


def load_sample(image_path: Path, *, strict: bool = True) -> Sample:
    sample_id = image_path.stem
    mask_path = image_path.with_name(f"{sample_id}{MASK_SUFFIX}.pgm")
    if not mask_path.exists():
        raise err.missing_mask(sample_id)

    image = read_netpbm(image_path)
    mask = read_netpbm(mask_path)
    if mask.shape[0] != 1:
        raise err.malformed_header(str(mask_path), "masks must be single channel 'P5' images")

    if image.shape[1:] != mask.shape[1:]:
        raise err.size_mismatch(sample_id, image.shape[1:], mask.shape[1:])

    return Sample(
        sample_id,
        Tensor((image.astype(np.float32) / MAXVAL)[None]),
        Tensor(mask_from_pixels(mask, str(mask_path), strict=strict)[None]),
    )


def load_dir(path: Path, *, strict: bool = True) -> list[Sample]:
    """Every '<id>.ppm' of the directory with its '<id>_mask.pgm', in natural id order."""
    if not path.is_dir():
        raise err.os_error(f"Dataset directory '{path}' does not exist")

    images = natsorted(path.glob("*.ppm"), key=lambda p: p.name)
    if not images:
        raise err.empty_dataset(str(path))

    return [load_sample(image, strict=strict) for image in images]


def save_mask(mask: Tensor | npt.NDArray[Any], path: Path) -> None:
    """Write a (1, 1, H, W) or (H, W) binary mask as a 0/255 PGM."""
    data = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    write_netpbm(path, to_pixels(data.reshape(1, *data.shape[-2:])))


def save_sample(sample: Sample, directory: Path) -> tuple[Path, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    image_path = directory / f"{sample.id}.ppm"
    mask_path = directory / f"{sample.id}{MASK_SUFFIX}.pgm"

    image = sample.image.data[0]
    if image.shape[0] == 1:
        image = np.repeat(image, 3, axis=0)

    write_netpbm(image_path, to_pixels(image))
    save_mask(sample.mask, mask_path)
    return image_path, mask_path
