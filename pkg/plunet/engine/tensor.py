from __future__ import annotations

import struct
from enum import StrEnum, auto
from typing import Any, Self, final, override

import numpy as np
import numpy.typing as npt

import plunet.errors as err

type Dims = tuple[int, int, int, int]

MAGIC = b"PLUT"
VERSION = 1
_HEADER = struct.Struct("<4sIB4I")


class DType(StrEnum):
    f32 = auto()
    f64 = auto()

    @property
    def numpy(self) -> np.dtype[Any]:
        return np.dtype(np.float32 if self is DType.f32 else np.float64)

    @property
    def code(self) -> int:
        return 0 if self is DType.f32 else 1

    @classmethod
    def from_code(cls, code: int) -> DType:
        match code:
            case 0:
                return cls.f32
            case 1:
                return cls.f64
            case _:
                raise err.cannot_decode("tensor", f"unknown dtype code {code}")

    @classmethod
    def of(cls, array: npt.NDArray[Any]) -> DType:
        if array.dtype == np.float32:
            return cls.f32
        if array.dtype == np.float64:
            return cls.f64
        raise err.invalid_tensor(f"unsupported element type {array.dtype}")


@final
class Tensor:
    """
    Dense rank-4 array (N, C, H, W) of f32 or f64 elements, row-major with W fastest.
    Parameters use the same carrier: conv weights (O, I/g, kh, kw), per-channel vectors (1, C, 1, 1).
    """

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data: npt.ArrayLike, *, requires_grad: bool = False, name: str = "") -> None:
        array = np.asarray(data)
        if array.ndim != 4:
            raise err.invalid_tensor(f"expected 4 dims, got {array.ndim}")

        if any(extent < 1 for extent in array.shape):
            raise err.invalid_tensor(f"all extents must be >= 1, got {array.shape}")

        DType.of(array)

        self.data: npt.NDArray[Any] = np.ascontiguousarray(array)
        self.requires_grad: bool = requires_grad
        self.name: str = name

    # region magic methods
    @override
    def __repr__(self) -> str:
        name = f" '{self.name}'" if self.name else ""
        return f"<Tensor{name} dims={self.dims} dtype={self.dtype}{' grad' if self.requires_grad else ''}>"

    # endregion

    # region attributes
    @property
    def dims(self) -> Dims:
        n, c, h, w = self.data.shape
        return (n, c, h, w)

    @property
    def dtype(self) -> DType:
        return DType.of(self.data)

    @property
    def size(self) -> int:
        return int(self.data.size)

    # endregion

    # region methods
    @classmethod
    def zeros(cls, dims: Dims, dtype: DType = DType.f32, **kwargs: Any) -> Self:
        return cls(np.zeros(dims, dtype=dtype.numpy), **kwargs)

    @classmethod
    def ones(cls, dims: Dims, dtype: DType = DType.f32, **kwargs: Any) -> Self:
        return cls(np.ones(dims, dtype=dtype.numpy), **kwargs)

    @classmethod
    def channels(cls, values: npt.ArrayLike, dtype: DType = DType.f32, **kwargs: Any) -> Self:
        """Per-channel vector stored as (1, C, 1, 1)."""
        array = np.asarray(values, dtype=dtype.numpy).reshape(1, -1, 1, 1)
        return cls(array, **kwargs)

    def astype(self, dtype: DType) -> Tensor:
        return Tensor(self.data.astype(dtype.numpy), requires_grad=self.requires_grad, name=self.name)

    def with_data(self, data: npt.NDArray[Any]) -> Tensor:
        return Tensor(data, requires_grad=self.requires_grad, name=self.name)

    # endregion


def encode_tensor(tensor: Tensor) -> bytes:
    """'PLUT' encoding: magic, version u32, dtype u8, 4 x u32 dims, little-endian elements."""
    dtype = tensor.dtype
    header = _HEADER.pack(MAGIC, VERSION, dtype.code, *tensor.dims)
    return header + tensor.data.astype(dtype.numpy.newbyteorder("<"), copy=False).tobytes(order="C")


def decode_tensor(buffer: bytes | memoryview, offset: int = 0) -> tuple[Tensor, int]:
    """Decode one tensor starting at offset, returns the tensor and the offset just past it."""
    if len(buffer) - offset < _HEADER.size:
        raise err.cannot_decode("tensor", "truncated header")

    magic, version, code, *dims = _HEADER.unpack_from(buffer, offset)
    if magic != MAGIC:
        raise err.cannot_decode("tensor", f"bad magic {magic!r}")

    if version != VERSION:
        raise err.cannot_decode("tensor", f"unsupported version {version}")

    dtype = DType.from_code(code)
    count = int(np.prod(dims))
    start = offset + _HEADER.size
    end = start + count * dtype.numpy.itemsize
    if end > len(buffer):
        raise err.cannot_decode("tensor", "truncated data")

    data = np.frombuffer(buffer, dtype=dtype.numpy.newbyteorder("<"), count=count, offset=start)
    return Tensor(data.astype(dtype.numpy).reshape(dims)), end
