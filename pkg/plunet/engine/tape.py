from __future__ import annotations

import contextlib
from collections.abc import Callable, Iterable, Iterator, Sequence
from contextvars import ContextVar
from dataclasses import dataclass
from types import TracebackType
from typing import Any, Self, override

import numpy as np
import numpy.typing as npt

import plunet.errors as err
from plunet.engine.tensor import DType, Tensor

type Array = npt.NDArray[Any]
type BackwardFn = Callable[[Array], Sequence[Array | None]]

_ACTIVE: ContextVar[GradTape | None] = ContextVar("plunet_active_tape", default=None)


@dataclass(frozen=True, slots=True)
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class GradTape(contextlib.AbstractContextManager["GradTape"]):
    """
    Ordered record of executed primitives. Ops executed inside `with GradTape() as tape:` append a node
    holding the tensors their backward needs.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._token: Any = None

    def __len__(self) -> int:
        return len(self.nodes)

    @override
    def __enter__(self) -> Self:
        self._token = _ACTIVE.set(self)
        return self

    @override
    def __exit__(
        self, exctype: type[BaseException] | None, excinst: BaseException | None, exctb: TracebackType | None
    ) -> None:
        _ACTIVE.reset(self._token)
        self._token = None

    def record(self, op: str, inputs: Iterable[Tensor], output: Tensor, backward: BackwardFn) -> None:
        self.nodes.append(Node(op, tuple(inputs), output, backward))

    def learnable(self) -> Iterator[Tensor]:
        seen: set[int] = set()
        for node in self.nodes:
            for tensor in node.inputs:
                if tensor.requires_grad and id(tensor) not in seen:
                    seen.add(id(tensor))
                    yield tensor


def record(op: str, inputs: Iterable[Tensor], output: Tensor, backward: BackwardFn) -> Tensor:
    if (tape := _ACTIVE.get()) is not None:
        tape.record(op, inputs, output, backward)

    return output


class Gradients:
    """Gradients keyed by tensor identity."""

    def __init__(self, grads: dict[int, Array]) -> None:
        self._grads = grads

    def __getitem__(self, tensor: Tensor) -> Array:
        return self._grads[id(tensor)]

    def __contains__(self, tensor: object) -> bool:
        return isinstance(tensor, Tensor) and id(tensor) in self._grads

    def __len__(self) -> int:
        return len(self._grads)

    def get(self, tensor: Tensor) -> Array | None:
        return self._grads.get(id(tensor))


def backward(
    tape: GradTape, loss_grad: Array, *, output: Tensor | None = None, wrt: Sequence[Tensor] = ()
) -> Gradients:
    """
    Replay the tape in reverse execution order, starting from d(loss)/d(output) = loss_grad.
    Gradients are accumulated when a tensor feeds several consumers.
    Every learnable tensor touched in forward gets an entry, zeros if the loss does not depend on it;
    tensors listed in `wrt` are returned too, learnable or not.
    """
    if not tape.nodes:
        raise err.empty_tape()

    if output is None:
        output = tape.nodes[-1].output

    loss_grad = np.asarray(loss_grad)
    if DType.of(loss_grad) is not output.dtype:
        raise err.dtype_mismatch("backward", (DType.of(loss_grad), output.dtype))

    if loss_grad.shape != output.data.shape:
        raise err.shape_mismatch("backward", f"gradient {loss_grad.shape} vs output {output.dims}")

    grads: dict[int, Array] = {id(output): loss_grad}

    for node in reversed(tape.nodes):
        upstream = grads.get(id(node.output))
        if upstream is None:
            continue

        for tensor, grad in zip(node.inputs, node.backward(upstream), strict=True):
            if grad is None:
                continue

            key = id(tensor)
            grads[key] = grads[key] + grad if key in grads else grad

    kept: dict[int, Array] = {}
    for tensor in (*tape.learnable(), *wrt):
        key = id(tensor)
        kept[key] = grads[key] if key in grads else np.zeros_like(tensor.data)

    return Gradients(kept)
