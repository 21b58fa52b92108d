"""2-D tensors with reverse-mode gradients.

All values in this package live in rank-2 row-major arrays (vectors are
1xD or Dx1). Graphs are built define-by-run: every op records its parents
and a backward closure on the output tensor; `backward()` on a 1x1 scalar
propagates gradients in reverse topological order.

Two global switches:
  checked mode  — every op output is verified finite (NumericError names
                  the offending op). On for 64-bit test work, off for
                  32-bit training.
  grad enabled  — `no_grad()` disables taping, e.g. for a frozen teacher.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable

import numpy as np

from speechalign.errors import NumericError, ShapeError

DTYPES = {"float32": np.float32, "float64": np.float64}

_uid = itertools.count()
_checked = True
_grad_enabled = True


def set_checked(flag: bool) -> None:
    global _checked
    _checked = bool(flag)


def is_checked() -> bool:
    return _checked


@contextlib.contextmanager
def no_grad():
    """Disable taping inside the block; outputs are constants."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A rank-2 array plus the tape bookkeeping for reverse mode."""

    __slots__ = ("data", "grad", "requires_grad", "op", "uid", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        op: str = "leaf",
        parents: tuple[Tensor, ...] = (),
        backward: Callable[[np.ndarray], Iterable[np.ndarray | None]] | None = None,
    ):
        arr = np.asarray(data)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"{op}: tensors are rank-2, got shape {arr.shape}")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.op = op
        self.uid = next(_uid)
        if _checked and not np.all(np.isfinite(arr)):
            raise NumericError(f"op #{self.uid} ({op}) produced non-finite values")
        taped = _grad_enabled and (requires_grad or any(p.requires_grad for p in parents))
        self.requires_grad = taped
        self.grad: np.ndarray | None = None
        self._parents = parents if taped else ()
        self._backward = backward if taped else None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False, op="detach")

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != value shape {self.data.shape} (op {self.op})"
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode gradient of this scalar w.r.t. every taped leaf."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a 1x1 scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.accumulate_grad(np.asarray(g))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, op={self.op!r})"


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr, requires_grad=False, op="const")
