from __future__ import annotations

import dataclasses
import tomllib
from dataclasses import dataclass, field
from enum import StrEnum, auto
from pathlib import Path
from typing import Any, override

import plunet.errors as err
from plunet.arch import ArchConfig, preset, scaled
from plunet.data import Sample, SplitSpec, load_dir, synth_generate
from plunet.engine import DType
from plunet.metrics import DEFAULT_THRESHOLD
from plunet.names import Variant
from plunet.train.adam import AdamConfig
from plunet.utils.cast import as_bool, as_enum, as_float, as_fraction, as_ints, as_path, as_positive, as_uint


class HEADER(StrEnum):
    """Dotted TOML key paths, nested keys joined by ':'."""

    NO_HEADER = ""
    SEED = auto()
    EPOCHS = auto()
    BATCH_SIZE = auto()
    THRESHOLD = auto()
    OUT = auto()
    DTYPE = auto()
    ARCH = auto()
    OPTIMIZER = auto()
    OPTIMIZER_LR = "optimizer:lr"
    OPTIMIZER_BETA1 = "optimizer:beta1"
    OPTIMIZER_BETA2 = "optimizer:beta2"
    OPTIMIZER_EPS = "optimizer:eps"
    DATA = auto()
    DATA_PATH = "data:path"
    DATA_STRICT_MASKS = "data:strict_masks"
    DATA_SYNTH_COUNT = "data:synth_count"
    DATA_SYNTH_SIZE = "data:synth_size"
    DATA_SYNTH_SEED = "data:synth_seed"
    SPLIT = auto()
    SPLIT_TRAIN = "split:train"
    SPLIT_VAL = "split:val"
    SPLIT_TEST = "split:test"
    SPLIT_SEED = "split:seed"

    @override
    def __add__(self, other: object) -> HEADER:
        assert isinstance(other, str)
        if self is HEADER.NO_HEADER:
            return HEADER(other)

        return HEADER(f"{self.value}:{other}")


@dataclass(frozen=True)
class DataSource:
    """A dataset directory, or a synthetic dataset when no path is given."""

    path: Path | None = None
    strict_masks: bool = True
    synth_count: int = 200
    synth_size: tuple[int, int] = (64, 64)
    synth_seed: int = 0

    def load(self) -> list[Sample]:
        if self.path is not None:
            return load_dir(self.path, strict=self.strict_masks)

        return synth_generate(self.synth_count, *self.synth_size, seed=self.synth_seed)


@dataclass(frozen=True)
class TrainConfig:
    arch: ArchConfig = field(default_factory=lambda: preset(Variant.plunet))
    epochs: int = 100
    batch_size: int = 16
    optimizer: AdamConfig = AdamConfig()
    seed: int = 0
    threshold: float = DEFAULT_THRESHOLD
    data: DataSource = DataSource()
    split: SplitSpec = SplitSpec()
    out: Path = Path("run")
    dtype: DType = DType.f32

    def __post_init__(self) -> None:
        err.assert_option(err.IsGreater("batch_size", self.batch_size, 1))
        err.assert_option(err.IsGreater("epochs", self.epochs, 1))
        if not 0.0 < self.threshold < 1.0:
            err.assert_option(err.Raise("threshold", self.threshold, expected="in range (0, 1)"))

    @property
    def log_path(self) -> Path:
        return self.out / "train.jsonl"

    @property
    def last_path(self) -> Path:
        return self.out / "last.plw"

    @property
    def best_path(self) -> Path:
        return self.out / "best.plw"

    def to_dict(self) -> dict[str, Any]:
        """Every setting that shapes the trained weights; the run directory is left out."""
        return dict(
            arch=self.arch.to_dict(),
            epochs=self.epochs,
            batch_size=self.batch_size,
            optimizer=dataclasses.asdict(self.optimizer),
            seed=self.seed,
            threshold=self.threshold,
            data=dict(
                path=None if self.data.path is None else str(self.data.path),
                strict_masks=self.data.strict_masks,
                synth_count=self.data.synth_count,
                synth_size=list(self.data.synth_size),
                synth_seed=self.data.synth_seed,
            ),
            split=dataclasses.asdict(self.split),
            dtype=str(self.dtype),
        )


def parse_arch(table: Any) -> ArchConfig:
    """
    `arch = "<preset>"`, or an [arch] table: a preset name with any ArchConfig field override, or a JSON config
    file alone; both take an optional power-of-two width_scale.
    """
    if isinstance(table, str):
        table = {"preset": table}

    err.assert_option(err.IsType("arch", table, dict))
    values = dict(table)

    width_scale = as_positive(values.pop("width_scale", 1), "arch:width_scale")
    config_file = values.pop("config", None)

    if config_file is not None:
        if values:
            raise err.parse_unexpected_section(f"arch:{min(values)}")

        arch = ArchConfig.load(as_path(config_file, "arch:config"))

    else:
        if "preset" in values and "variant" in values:
            raise err.parse_unexpected_section("arch:variant")

        variant = values.pop("preset") if "preset" in values else values.pop("variant", Variant.plunet)
        arch = ArchConfig.from_dict({**values, "variant": str(preset(variant).variant)})

    return scaled(arch, width_scale)


def _destructure(data: dict[str, Any], root_header: HEADER = HEADER.NO_HEADER) -> list[tuple[HEADER, Any]]:
    elements: list[tuple[HEADER, Any]] = []

    for header, content in data.items():
        try:
            full_header = root_header + header
        except ValueError:
            raise err.parse_invalid_section_name(header)

        if isinstance(content, dict) and full_header is not HEADER.ARCH:
            elements.extend(_destructure(content, full_header))  # pyright: ignore[reportUnknownArgumentType]

        else:
            elements.append((full_header, content))

    return elements


def parse_train_config(path: Path, **overrides: Any) -> TrainConfig:
    """Read a TOML training file; keyword overrides (CLI flags) win over file values, None means unset."""
    try:
        with open(path, "rb") as config_file:
            data = tomllib.load(config_file)

    except FileNotFoundError:
        raise err.os_error(f"Training config '{path}' does not exist")

    except tomllib.TOMLDecodeError as e:
        raise err.parse_cannot_decode_toml(e.args[0])

    values: dict[str, Any] = {}
    optimizer: dict[str, float] = {}
    data_source: dict[str, Any] = {}
    split: dict[str, Any] = {}

    for header, value in _destructure(data):
        match header:
            case HEADER.SEED:
                values["seed"] = as_uint(value, "seed")

            case HEADER.EPOCHS:
                values["epochs"] = as_positive(value, "epochs")

            case HEADER.BATCH_SIZE:
                values["batch_size"] = as_positive(value, "batch_size")

            case HEADER.THRESHOLD:
                values["threshold"] = as_fraction(value, "threshold")

            case HEADER.OUT:
                values["out"] = as_path(value, "out")

            case HEADER.DTYPE:
                values["dtype"] = as_enum(DType)(value, "dtype")

            case HEADER.ARCH:
                values["arch"] = parse_arch(value)

            case HEADER.OPTIMIZER_LR:
                optimizer["lr"] = as_float(value, "optimizer:lr")

            case HEADER.OPTIMIZER_BETA1:
                optimizer["beta1"] = as_fraction(value, "optimizer:beta1")

            case HEADER.OPTIMIZER_BETA2:
                optimizer["beta2"] = as_fraction(value, "optimizer:beta2")

            case HEADER.OPTIMIZER_EPS:
                optimizer["eps"] = as_float(value, "optimizer:eps")

            case HEADER.DATA_PATH:
                data_source["path"] = as_path(value, "data:path")

            case HEADER.DATA_STRICT_MASKS:
                data_source["strict_masks"] = as_bool(value, "data:strict_masks")

            case HEADER.DATA_SYNTH_COUNT:
                data_source["synth_count"] = as_positive(value, "data:synth_count")

            case HEADER.DATA_SYNTH_SIZE:
                height, width = as_ints(value, "data:synth_size", length=2)
                data_source["synth_size"] = (height, width)

            case HEADER.DATA_SYNTH_SEED:
                data_source["synth_seed"] = as_uint(value, "data:synth_seed")

            case HEADER.SPLIT_TRAIN | HEADER.SPLIT_VAL | HEADER.SPLIT_TEST:
                split[header.name.removeprefix("SPLIT_").lower()] = as_fraction(value, header)

            case HEADER.SPLIT_SEED:
                split["seed"] = as_uint(value, "split:seed")

            case _:
                raise err.parse_unexpected_section(header)

    config = TrainConfig(
        **values,
        optimizer=AdamConfig(**optimizer),
        data=DataSource(**data_source),
        split=SplitSpec(**split),
    )
    return apply_overrides(config, **overrides)


def apply_overrides(config: TrainConfig, **overrides: Any) -> TrainConfig:
    updates = {key: value for key, value in overrides.items() if value is not None}
    return dataclasses.replace(config, **updates) if updates else config
