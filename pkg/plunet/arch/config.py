from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import plunet.errors as err
from plunet.names import BlockKind, Variant
from plunet.nn.blocks import DEFAULT_SE_REDUCTION
from plunet.utils.cast import as_enum, as_ints, as_positive

PATHWAY_KINDS = (BlockKind.conv_block, BlockKind.ls)
BOTTLENECK_KINDS = (BlockKind.conv_block, BlockKind.ps)


@dataclass(frozen=True)
class ArchConfig:
    """
    Encoder-decoder description: `depth` levels of (block -> maxpool) with channel `widths`, a bottleneck at
    `bottleneck_width`, and a mirrored decoder.
    """

    variant: Variant
    in_channels: int = 3
    out_channels: int = 1
    depth: int = 4
    widths: tuple[int, ...] = (64, 128, 256, 512)
    bottleneck_width: int = 1024
    encoder_kind: BlockKind = BlockKind.conv_block
    decoder_kind: BlockKind = BlockKind.conv_block
    bottleneck_kind: BlockKind = BlockKind.conv_block
    se_reduction: int = DEFAULT_SE_REDUCTION

    def __post_init__(self) -> None:
        object.__setattr__(self, "widths", tuple(self.widths))

        if self.depth < 1 or len(self.widths) != self.depth:
            raise err.invalid_depth(self.depth, self.widths)

        if self.in_channels < 1 or self.out_channels < 1:
            raise err.invalid_widths((self.in_channels, self.out_channels), self.bottleneck_width)

        if self.widths[0] < 1 or any(b != 2 * a for a, b in zip(self.widths, self.widths[1:])):
            raise err.invalid_widths(self.widths, self.bottleneck_width)

        if self.bottleneck_width != 2 * self.widths[-1]:
            raise err.invalid_widths(self.widths, self.bottleneck_width)

        for role, kind in (("encoder block", self.encoder_kind), ("decoder block", self.decoder_kind)):
            if kind not in PATHWAY_KINDS:
                raise err.parse_invalid_block_kind(role, kind, PATHWAY_KINDS)

        if self.bottleneck_kind not in BOTTLENECK_KINDS:
            raise err.parse_invalid_block_kind("bottleneck", self.bottleneck_kind, BOTTLENECK_KINDS)

    @property
    def multiple(self) -> int:
        """Input spatial extents must be multiples of this."""
        return 2**self.depth

    # region serialization
    def to_dict(self) -> dict[str, Any]:
        return dict(
            variant=str(self.variant),
            in_channels=self.in_channels,
            out_channels=self.out_channels,
            depth=self.depth,
            widths=list(self.widths),
            bottleneck_width=self.bottleneck_width,
            encoder_kind=str(self.encoder_kind),
            decoder_kind=str(self.decoder_kind),
            bottleneck_kind=str(self.bottleneck_kind),
            se_reduction=self.se_reduction,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ArchConfig:
        """Missing fields fall back to the preset of the given variant; unknown keys are rejected."""
        known = {field.name for field in dataclasses.fields(cls)}
        if unknown := set(data) - known:
            raise err.unknown_arch_keys(unknown)

        if "variant" not in data:
            raise err.option_missing("variant")

        base = preset(as_enum(Variant)(data["variant"], "variant"))
        values: dict[str, Any] = {}

        for key, value in data.items():
            match key:
                case "variant":
                    continue

                case "widths":
                    values[key] = as_ints(value, key)

                case "encoder_kind" | "decoder_kind" | "bottleneck_kind":
                    values[key] = as_enum(BlockKind)(value, key)

                case _:
                    values[key] = as_positive(value, key)

        if "widths" in values and "depth" not in values:
            values["depth"] = len(values["widths"])

        return dataclasses.replace(base, **values)

    @classmethod
    def from_json(cls, document: str) -> ArchConfig:
        try:
            data = json.loads(document)

        except json.JSONDecodeError as e:
            raise err.parse_cannot_decode_json(str(e))

        if not isinstance(data, dict):
            raise err.parse_cannot_decode_json("expected a JSON object")

        return cls.from_dict(data)

    @classmethod
    def load(cls, path: Path) -> ArchConfig:
        try:
            return cls.from_json(path.read_text())

        except FileNotFoundError:
            raise err.os_error(f"Architecture config '{path}' does not exist")

    # endregion


def preset(variant: Variant | str, in_channels: int = 3) -> ArchConfig:
    """
    unet:   depth 4, widths 64..512, conv-block bottleneck at 1024, conv blocks
    lunet:  unet topology with LS blocks
    punet:  unet topology with a PS bottleneck at 1024
    plunet: depth 3, widths 64..256, PS bottleneck at 512, LS blocks
    """
    try:
        variant = Variant(variant)

    except ValueError:
        raise err.unknown_preset(str(variant))

    match variant:
        case Variant.unet:
            return ArchConfig(variant, in_channels)

        case Variant.lunet:
            return ArchConfig(variant, in_channels, encoder_kind=BlockKind.ls, decoder_kind=BlockKind.ls)

        case Variant.punet:
            return ArchConfig(variant, in_channels, bottleneck_kind=BlockKind.ps)

        case Variant.plunet:
            return ArchConfig(
                variant,
                in_channels,
                depth=3,
                widths=(64, 128, 256),
                bottleneck_width=512,
                encoder_kind=BlockKind.ls,
                decoder_kind=BlockKind.ls,
                bottleneck_kind=BlockKind.ps,
            )


def scaled(config: ArchConfig, factor: int) -> ArchConfig:
    """
    Same topology with every width divided by `factor`, a power of two. The SE reduction is capped by the
    narrowest width.
    """
    if factor < 1 or factor & (factor - 1):
        raise err.invalid_widths(config.widths, config.bottleneck_width)

    if config.widths[0] % factor:
        raise err.invalid_widths([w // factor for w in config.widths], config.bottleneck_width // factor)

    return dataclasses.replace(
        config,
        widths=tuple(w // factor for w in config.widths),
        bottleneck_width=config.bottleneck_width // factor,
        se_reduction=min(config.se_reduction, config.widths[0] // factor),
    )
