"""Named parameter store shared by encoders, heads and the optimizer."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from speechalign.errors import ShapeError
from speechalign.nn.tensor import Tensor


class ParamStore:
    """Uniquely named parameter tensors plus a global step counter.

    Gradients accumulate on the tensors themselves; `step` counts applied
    optimizer updates and is persisted in checkpoints.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ShapeError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, op=f"param:{name}")
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self._params.items() if t.requires_grad]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def set_trainable(self, prefix: str, flag: bool) -> int:
        """Freeze or unfreeze every parameter whose name starts with prefix."""
        hit = 0
        for n, t in self._params.items():
            if n.startswith(prefix):
                t.requires_grad = flag
                hit += 1
        return hit

    def merge(self, other: "ParamStore") -> None:
        """Adopt every parameter of `other` (names must stay unique)."""
        for n, t in other.items():
            if n in self._params:
                raise ShapeError(f"duplicate parameter name {n!r} in merge")
            self._params[n] = t

    def clone(self) -> "ParamStore":
        out = ParamStore(dtype=self.dtype)
        for n, t in self._params.items():
            c = out.add(n, t.data.copy())
            c.requires_grad = t.requires_grad
        out.step = self.step
        return out
