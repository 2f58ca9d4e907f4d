import math
from collections.abc import Callable
from enum import Enum
from pathlib import Path
from typing import Any

import plunet.errors as err


def as_uint(value: Any, option: str) -> int:
    if isinstance(value, bool):
        err.assert_option(err.Raise(option, value, expected="integer"))

    try:
        uint = int(value)

    except (TypeError, ValueError):
        err.assert_option(err.Raise(option, value, expected="integer"))

    if uint != value and not isinstance(value, str):
        err.assert_option(err.Raise(option, value, expected="integer"))

    err.assert_option(err.IsGreater(option, uint, 0))

    return uint


def as_positive(value: Any, option: str) -> int:
    uint = as_uint(value, option)
    err.assert_option(err.IsGreater(option, uint, 0, strict=True))
    return uint


def as_float(value: Any, option: str) -> float:
    if isinstance(value, bool):
        err.assert_option(err.Raise(option, value, expected="number"))

    try:
        number = float(value)

    except (TypeError, ValueError):
        err.assert_option(err.Raise(option, value, expected="number"))

    if not math.isfinite(number):
        err.assert_option(err.Raise(option, value, expected="finite number"))

    return number


def as_fraction(value: Any, option: str) -> float:
    """Number in [0, 1)."""
    number = as_float(value, option)
    err.assert_option(err.IsInRange(option, number, 0.0, 1.0))
    return number


def as_bool(value: Any, option: str) -> bool:
    if value in ("True", "true", True):
        return True

    elif value in ("False", "false", False):
        return False

    err.assert_option(err.Raise(option, value, expected="[true|false]"))


def as_enum[E: Enum](enum: type[E]) -> Callable[[Any, str], E]:
    def inner(value: Any, option: str) -> E:
        try:
            return enum(value)

        except ValueError:
            err.assert_option(
                err.Raise(option, value, expected=f"[{'|'.join(str(m.value) for m in enum.__members__.values())}]")
            )

    return inner


def as_path(value: Any, option: str) -> Path:
    err.assert_option(err.IsType(option, value, str))
    return Path(value).expanduser()


def as_ints(value: Any, option: str, length: int | None = None) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]

    err.assert_option(err.IsType(option, value, (list, tuple)))
    ints = tuple(as_positive(v, option) for v in value)

    if length is not None and len(ints) != length:
        err.assert_option(err.Raise(option, value, expected=f"{length} comma separated positive integers"))

    return ints
