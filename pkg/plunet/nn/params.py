from __future__ import annotations

import math
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from enum import StrEnum, auto

import numpy as np

import plunet.errors as err
from plunet.engine import Dims, DType, Tensor


class ParamKind(StrEnum):
    weight = auto()
    bias = auto()
    gamma = auto()
    beta = auto()
    running_mean = auto()
    running_var = auto()

    @property
    def learnable(self) -> bool:
        return self not in (ParamKind.running_mean, ParamKind.running_var)


@dataclass(frozen=True)
class ParamSpec:
    """Declaration of one named tensor: '<block_path>.<stage>.<tensor>'."""

    name: str
    dims: Dims
    kind: ParamKind
    fan_in: int = 0

    @property
    def size(self) -> int:
        return math.prod(self.dims)


def join(*parts: str) -> str:
    return ".".join(p for p in parts if p)


class ParamView:
    """Prefix-scoped read access into a registry."""

    def __init__(self, registry: ParameterRegistry, prefix: str = "") -> None:
        self.registry: ParameterRegistry = registry
        self.prefix: str = prefix

    def __getitem__(self, key: str) -> Tensor:
        return self.registry[join(self.prefix, key)]

    def optional(self, key: str) -> Tensor | None:
        name = join(self.prefix, key)
        return self.registry[name] if name in self.registry else None

    def scope(self, sub: str) -> ParamView:
        return ParamView(self.registry, join(self.prefix, sub))


class ParameterRegistry:
    """Ordered name -> tensor mapping holding learnable parameters and batch-norm running statistics."""

    def __init__(self, specs: Iterable[ParamSpec], tensors: dict[str, Tensor]) -> None:
        self.specs: dict[str, ParamSpec] = {}
        for spec in specs:
            if spec.name in self.specs:
                raise err.duplicate_parameter(spec.name)
            self.specs[spec.name] = spec

        for name in self.specs:
            if name not in tensors:
                raise err.missing_parameter(name)

            if tensors[name].dims != self.specs[name].dims:
                raise err.shape_mismatch("registry", f"'{name}' has dims {tensors[name].dims}")

        self.tensors: dict[str, Tensor] = {
            name: Tensor(tensors[name].data, requires_grad=spec.kind.learnable, name=name)
            for name, spec in self.specs.items()
        }

    # region magic methods
    def __getitem__(self, name: str) -> Tensor:
        try:
            return self.tensors[name]
        except KeyError:
            raise err.missing_parameter(name)

    def __contains__(self, name: object) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    # endregion

    # region attributes
    @property
    def dtype(self) -> DType:
        return next(iter(self.tensors.values())).dtype

    @property
    def learnable(self) -> dict[str, Tensor]:
        return {name: t for name, t in self.tensors.items() if self.specs[name].kind.learnable}

    @property
    def buffers(self) -> dict[str, Tensor]:
        return {name: t for name, t in self.tensors.items() if not self.specs[name].kind.learnable}

    @property
    def size(self) -> int:
        """Number of learnable elements."""
        return sum(t.size for t in self.learnable.values())

    # endregion

    # region methods
    @classmethod
    def initialize(cls, specs: Iterable[ParamSpec], seed: int, dtype: DType = DType.f32) -> ParameterRegistry:
        """
        He-uniform fan-in initialization U(-sqrt(6/fan_in), sqrt(6/fan_in)) for weights, zeros for biases, betas and
        running means, ones for gammas and running variances. Weights are drawn in declaration order from one seeded
        stream.
        """
        rng = np.random.default_rng(seed)
        specs = list(specs)
        tensors: dict[str, Tensor] = {}

        for spec in specs:
            match spec.kind:
                case ParamKind.weight:
                    bound = math.sqrt(6.0 / spec.fan_in)
                    data = rng.uniform(-bound, bound, spec.dims)
                case ParamKind.gamma | ParamKind.running_var:
                    data = np.ones(spec.dims)
                case _:
                    data = np.zeros(spec.dims)

            tensors[spec.name] = Tensor(data.astype(dtype.numpy), requires_grad=spec.kind.learnable, name=spec.name)

        return cls(specs, tensors)

    def view(self, prefix: str = "") -> ParamView:
        return ParamView(self, prefix)

    def copy(self) -> ParameterRegistry:
        return ParameterRegistry(
            self.specs.values(),
            {name: Tensor(t.data.copy(), requires_grad=t.requires_grad, name=name) for name, t in self.tensors.items()},
        )

    def astype(self, dtype: DType) -> ParameterRegistry:
        return ParameterRegistry(self.specs.values(), {name: t.astype(dtype) for name, t in self.tensors.items()})

    # endregion
