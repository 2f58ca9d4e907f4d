from enum import StrEnum, auto


class Mode(StrEnum):
    train = auto()
    eval = auto()


class Variant(StrEnum):
    unet = auto()
    lunet = auto()
    punet = auto()
    plunet = auto()


class BlockKind(StrEnum):
    conv_block = auto()
    se = auto()
    lg = auto()
    ls = auto()
    ps = auto()


class Aggregation(StrEnum):
    per_image = auto()
    global_ = "global"


class FlopConvention(StrEnum):
    TWO_MACS = "2*MACs"
    MACS = "MACs"

    @property
    def factor(self) -> int:
        return 2 if self is FlopConvention.TWO_MACS else 1
