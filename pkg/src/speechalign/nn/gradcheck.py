"""Central-finite-difference validation of reverse-mode gradients.

The harness perturbs every parameter entry by +/- eps, so it is only
trustworthy in 64-bit mode; it refuses float32 stores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from speechalign.errors import ConfigError, DeterminismError
from speechalign.nn.params import ParamStore
from speechalign.nn.tensor import Tensor


@dataclass
class ParamReport:
    name: str
    max_rel_err: float
    max_abs_err: float
    checked_entries: int


@dataclass
class GradCheckReport:
    eps: float
    tol: float
    per_param: list[ParamReport] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((p.max_rel_err for p in self.per_param), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol

    def worst(self) -> ParamReport | None:
        return max(self.per_param, key=lambda p: p.max_rel_err, default=None)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        w = self.worst()
        where = f" (worst: {w.name} = {w.max_rel_err:.3e})" if w else ""
        return f"{status} max rel err {self.max_rel_err:.3e} vs tol {self.tol:.1e}{where}"


def grad_check(
    loss_fn: Callable[[ParamStore], Tensor],
    params: ParamStore,
    eps: float = 1e-5,
    tol: float = 1e-4,
    rel_floor: float = 1e-3,
    max_entries_per_param: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode gradients against (f(x+eps) - f(x-eps)) / 2eps.

    Relative error per entry is |a - n| / max(|a|, |n|, rel_floor); entries
    below rel_floor in magnitude are thereby held to an absolute tolerance
    of tol * rel_floor. `max_entries_per_param` subsamples large tensors
    (deterministically from `seed`); None checks every entry.
    """
    if params.dtype != np.float64:
        raise ConfigError("grad_check requires a float64 ParamStore")
    if not (0.0 < eps <= 1e-2):
        raise ConfigError(f"grad_check eps must be in (0, 1e-2], got {eps}")

    base = loss_fn(params).item()
    again = loss_fn(params).item()
    if base != again:
        raise DeterminismError(f"loss_fn is not deterministic: {base!r} != {again!r}")

    params.zero_grad()
    loss = loss_fn(params)
    loss.backward()
    analytic = {
        n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for n, t in params.trainable()
    }

    rng = np.random.default_rng(seed)
    report = GradCheckReport(eps=eps, tol=tol)
    for name, tensor in params.trainable():
        a = analytic[name]
        flat = tensor.data.reshape(-1)
        total = flat.size
        if max_entries_per_param is not None and total > max_entries_per_param:
            idx = rng.choice(total, size=max_entries_per_param, replace=False)
            idx.sort()
        else:
            idx = np.arange(total)
        max_rel = 0.0
        max_abs = 0.0
        a_flat = a.reshape(-1)
        for i in idx:
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = loss_fn(params).item()
            flat[i] = saved - eps
            f_minus = loss_fn(params).item()
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            abs_err = abs(a_flat[i] - numeric)
            rel = abs_err / max(abs(a_flat[i]), abs(numeric), rel_floor)
            if rel > max_rel:
                max_rel = rel
            if abs_err > max_abs:
                max_abs = abs_err
        report.per_param.append(ParamReport(name, max_rel, max_abs, int(len(idx))))
    return report
