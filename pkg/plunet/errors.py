import contextlib
import traceback
from abc import ABC, abstractmethod
from collections.abc import Iterable, Sequence
from sys import stderr
from types import TracebackType
from typing import Any, Never, cast, final, overload, override

import typer
from rich import print as rprint
from rich.text import Text


class ParseError(Exception): ...


class ShapeError(ValueError): ...


class DataError(ValueError): ...


class CheckpointError(ValueError): ...


class TrainingError(RuntimeError): ...


class raise_typer(contextlib.AbstractContextManager[None]):
    """Context manager to re-raise exceptions as typer.Exit(). Exception messages are printed to stderr."""

    @override
    def __exit__(
        self, exctype: type[BaseException] | None, excinst: BaseException | None, exctb: TracebackType | None
    ) -> None:
        if exctype is None:
            return

        assert excinst is not None and exctb is not None

        if isinstance(excinst, typer.Exit):
            return

        if len(excinst.args) > 1 and isinstance(excinst.args[0], int):
            message: str = excinst.args[1]
            code: int = excinst.args[0]

        else:
            traceback.print_tb(exctb, file=stderr)
            message = f"{exctype.__name__}: {excinst}"
            code = 100  # Unknown exception

        rprint(Text(message, style="bold red"), file=stderr)
        raise typer.Exit(code)


# Error codes
def os_error(message: str) -> OSError:
    OSERROR = 2
    return OSError(OSERROR, message)


# region tensor engine
def shape_mismatch(op: str, detail: str) -> ShapeError:
    SHAPE_MISMATCH = 10
    return ShapeError(SHAPE_MISMATCH, f"{op}: shape mismatch, {detail}")


def invalid_groups(in_channels: int, out_channels: int, groups: int) -> ShapeError:
    INVALID_GROUPS = 11
    return ShapeError(
        INVALID_GROUPS, f"groups={groups} must divide both in_channels={in_channels} and out_channels={out_channels}"
    )


def empty_output(op: str, dims: Sequence[int]) -> ShapeError:
    EMPTY_OUTPUT = 12
    return ShapeError(EMPTY_OUTPUT, f"{op}: output extents {tuple(dims)} must all be >= 1")


def unsupported_configuration(op: str, detail: str) -> ShapeError:
    UNSUPPORTED_CONFIGURATION = 13
    return ShapeError(UNSUPPORTED_CONFIGURATION, f"{op}: unsupported configuration, {detail}")


def dtype_mismatch(op: str, dtypes: Iterable[object]) -> TypeError:
    DTYPE_MISMATCH = 14
    return TypeError(DTYPE_MISMATCH, f"{op}: cannot mix dtypes {', '.join(sorted(set(map(str, dtypes))))}")


def empty_tape() -> RuntimeError:
    EMPTY_TAPE = 15
    return RuntimeError(EMPTY_TAPE, "Cannot run backward on an empty tape")


def non_finite(op: str) -> FloatingPointError:
    NON_FINITE = 16
    return FloatingPointError(NON_FINITE, f"{op}: produced NaN or Inf from finite inputs")


def undefined_variance(op: str) -> ValueError:
    UNDEFINED_VARIANCE = 17
    return ValueError(UNDEFINED_VARIANCE, f"{op}: batch variance is undefined for a single element per channel")


def invalid_tensor(detail: str) -> ShapeError:
    INVALID_TENSOR = 18
    return ShapeError(INVALID_TENSOR, f"Invalid tensor: {detail}")


def cannot_decode(what: str, detail: str) -> CheckpointError:
    CANNOT_DECODE = 19
    return CheckpointError(CANNOT_DECODE, f"Cannot decode {what}: {detail}")


# endregion


# region blocks and architectures
def channel_mismatch(block: str, expected: int, got: int) -> ShapeError:
    CHANNEL_MISMATCH = 20
    return ShapeError(CHANNEL_MISMATCH, f"{block}: expected {expected} input channels, got {got}")


def invalid_reduction(channels: int, reduction: int) -> ValueError:
    INVALID_REDUCTION = 21
    return ValueError(INVALID_REDUCTION, f"SE reduction {reduction} does not divide channel count {channels}")


def invalid_dilations(kind: str, dilations: Sequence[int]) -> ValueError:
    INVALID_DILATIONS = 22
    return ValueError(INVALID_DILATIONS, f"Invalid dilations {list(dilations)} for block '{kind}'")


def invalid_widths(widths: Sequence[int], bottleneck: int) -> ValueError:
    INVALID_WIDTHS = 23
    return ValueError(
        INVALID_WIDTHS,
        f"Widths {list(widths)} (bottleneck {bottleneck}) must start >= 1 and double at every level",
    )


def invalid_depth(depth: int, widths: Sequence[int]) -> ValueError:
    INVALID_DEPTH = 24
    return ValueError(INVALID_DEPTH, f"Depth {depth} must be >= 1 and equal to the number of widths {list(widths)}")


def indivisible_input(dims: Sequence[int], multiple: int) -> ShapeError:
    INDIVISIBLE_INPUT = 25
    return ShapeError(
        INDIVISIBLE_INPUT, f"Input spatial extents {tuple(dims[2:])} must be multiples of {multiple}"
    )


def unknown_preset(name: str) -> ParseError:
    UNKNOWN_PRESET = 26
    return ParseError(UNKNOWN_PRESET, f"Unknown architecture preset '{name}'")


def unknown_arch_keys(keys: Iterable[str]) -> ParseError:
    UNKNOWN_ARCH_KEYS = 27
    return ParseError(UNKNOWN_ARCH_KEYS, f"Unknown architecture config keys: {', '.join(sorted(keys))}")


def missing_parameter(name: str) -> CheckpointError:
    MISSING_PARAMETER = 28
    return CheckpointError(MISSING_PARAMETER, f"Parameter '{name}' is missing")


def duplicate_parameter(name: str) -> CheckpointError:
    DUPLICATE_PARAMETER = 29
    return CheckpointError(DUPLICATE_PARAMETER, f"Parameter '{name}' is defined more than once")


# endregion


# region data
def malformed_header(path: str, detail: str) -> DataError:
    MALFORMED_HEADER = 31
    return DataError(MALFORMED_HEADER, f"Malformed header in '{path}': {detail}")


def size_mismatch(sample_id: str, image: Sequence[int], mask: Sequence[int]) -> DataError:
    SIZE_MISMATCH = 32
    return DataError(
        SIZE_MISMATCH, f"Sample '{sample_id}': image size {tuple(image)} does not match mask size {tuple(mask)}"
    )


def non_binary_mask(where: str) -> DataError:
    NON_BINARY_MASK = 33
    return DataError(NON_BINARY_MASK, f"Mask '{where}' is not binary")


def missing_mask(sample_id: str) -> DataError:
    MISSING_MASK = 34
    return DataError(MISSING_MASK, f"No mask found for sample '{sample_id}'")


def too_few_samples(count: int, minimum: int) -> DataError:
    TOO_FEW_SAMPLES = 35
    return DataError(TOO_FEW_SAMPLES, f"Got {count} samples, at least {minimum} are required")


def degenerate_dims(height: int, width: int, minimum: int) -> DataError:
    DEGENERATE_DIMS = 36
    return DataError(DEGENERATE_DIMS, f"Image size {height}x{width} is too small, both extents must be >= {minimum}")


def empty_dataset(where: str) -> DataError:
    EMPTY_DATASET = 37
    return DataError(EMPTY_DATASET, f"No samples found in {where}")


def invalid_fractions(fractions: Sequence[float]) -> DataError:
    INVALID_FRACTIONS = 38
    return DataError(INVALID_FRACTIONS, f"Split fractions {list(fractions)} must be positive and sum to 1")


# endregion


# region configuration parsing
def parse_cannot_decode_toml(message: str) -> ParseError:
    PARSE_CANNOT_DECODE_TOML = 40
    return ParseError(PARSE_CANNOT_DECODE_TOML, f"Cannot parse configuration file: {message}")


def parse_invalid_section_name(section: str) -> ParseError:
    PARSE_INVALID_SECTION_NAME = 41
    return ParseError(
        PARSE_INVALID_SECTION_NAME, f"Found invalid section name '{section}' while parsing configuration file"
    )


def parse_cannot_decode_json(message: str) -> ParseError:
    PARSE_CANNOT_DECODE_JSON = 42
    return ParseError(PARSE_CANNOT_DECODE_JSON, f"Cannot parse JSON document: {message}")


def parse_invalid_block_kind(role: str, kind: str, allowed: Iterable[str]) -> ParseError:
    PARSE_INVALID_BLOCK_KIND = 43
    return ParseError(
        PARSE_INVALID_BLOCK_KIND, f"Block kind '{kind}' cannot be used as {role}, expected one of [{'|'.join(allowed)}]"
    )


def parse_unexpected_section(section: str) -> ParseError:
    PARSE_UNEXPECTED_SECTION = 44
    return ParseError(
        PARSE_UNEXPECTED_SECTION, f"Found unexpected section '{section}' while parsing configuration file"
    )


# endregion


# region options
def option_invalid_dims(value: str, expected: int) -> ParseError:
    OPTION_INVALID_DIMS = 50
    return ParseError(
        OPTION_INVALID_DIMS, f"Option value '{value}' must be {expected} comma separated positive integers"
    )


def option_unknown_scope(scope: str, known: Iterable[str]) -> ParseError:
    OPTION_UNKNOWN_SCOPE = 51
    return ParseError(OPTION_UNKNOWN_SCOPE, f"Unknown gradcheck scope '{scope}', expected one of [{'|'.join(known)}]")


def option_missing(option: str) -> ParseError:
    OPTION_MISSING = 52
    return ParseError(OPTION_MISSING, f"Option '{option}' is required")


OPTION_INVALID_VALUE = 54


class AssertTest(ABC):
    def __init__(self, opt: str, value: Any) -> None:
        self.opt: str = opt
        self.value: Any = value

    @abstractmethod
    def __call__(self) -> bool:
        pass

    @property
    @abstractmethod
    def expected(self) -> str:
        pass


@final
class Raise(AssertTest):
    def __init__(self, opt: str, value: Any, *, expected: str) -> None:
        super().__init__(opt, value)
        self._expected = expected

    @override
    def __call__(self) -> bool:
        return False

    @property
    @override
    def expected(self) -> str:
        return self._expected


@final
class IsType(AssertTest):
    def __init__(self, opt: str, value: Any, typ: type | tuple[type, ...]) -> None:
        super().__init__(opt, value)
        self._type = typ

    @override
    def __call__(self) -> bool:
        return isinstance(self.value, self._type)

    @property
    @override
    def expected(self) -> str:
        return str(self._type)


@final
class IsGreater(AssertTest):
    def __init__(self, opt: str, value: float | int, min: float | int, *, strict: bool = False) -> None:
        super().__init__(opt, value)
        self.min = min
        self.strict = strict

    @override
    def __call__(self) -> bool:
        value = cast(float | int, self.value)
        return value > self.min if self.strict else value >= self.min

    @property
    @override
    def expected(self) -> str:
        return f"greater than {self.min}" if self.strict else f"greater or equal to {self.min}"


@final
class IsInRange(AssertTest):
    """Half-open range check: low <= value < high."""

    def __init__(self, opt: str, value: float | int, low: float | int, high: float | int) -> None:
        super().__init__(opt, value)
        self.low = low
        self.high = high

    @override
    def __call__(self) -> bool:
        return self.low <= cast(float | int, self.value) < self.high

    @property
    @override
    def expected(self) -> str:
        return f"in range [{self.low}, {self.high})"


@overload
def assert_option(test: Raise) -> Never: ...


@overload
def assert_option(test: AssertTest) -> None: ...


def assert_option(test: AssertTest) -> None:
    if not test():
        raise AssertionError(
            OPTION_INVALID_VALUE,
            f"Got invalid value '{test.value}' for option '{test.opt}', expected {test.expected}",
        )


# endregion


# region training
GRADCHECK_FAILED = 59


def training_diverged(epoch: int, step: int) -> TrainingError:
    TRAINING_DIVERGED = 60
    return TrainingError(
        TRAINING_DIVERGED, f"Training diverged at epoch {epoch}, step {step}: loss is NaN, try a lower learning rate"
    )


def arch_mismatch(detail: str) -> ShapeError:
    ARCH_MISMATCH = 61
    return ShapeError(ARCH_MISMATCH, f"Checkpoint architecture does not match the data: {detail}")


def no_samples(what: str) -> DataError:
    NO_SAMPLES = 62
    return DataError(NO_SAMPLES, f"Cannot {what} on an empty sample list")


def optimizer_shape_mismatch(name: str) -> ShapeError:
    OPTIMIZER_SHAPE_MISMATCH = 63
    return ShapeError(OPTIMIZER_SHAPE_MISMATCH, f"Parameter, gradient and optimizer state shapes differ for '{name}'")


# endregion
