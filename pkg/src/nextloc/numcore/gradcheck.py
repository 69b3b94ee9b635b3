"""Central finite-difference validation of analytic gradients.

For a parameter entry theta, compares d loss / d theta from backward()
against (loss(theta + h) - loss(theta - h)) / 2h. The error is relative,
|a - f| / max(|a|, |f|), except near zero (denominator < 1e-6) where the
absolute difference is used instead.

The loss closure must be deterministic: rebuild the same graph from the
current parameter values on every call (no dropout, no fresh rng draws).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from nextloc.numcore.params import ParameterStore
from nextloc.numcore.tensor import Tensor, backward


@dataclass
class FiniteDifferenceReport:
    max_rel_error: float
    n_checked: int
    worst_param: str
    worst_index: tuple[int, ...]
    failures: list[tuple[str, tuple[int, ...], float, float, float]] = field(default_factory=list)

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    store: ParameterStore,
    h: float = 1e-5,
    tol: float = 1e-4,
    max_entries_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    param_names: Sequence[str] | None = None,
) -> FiniteDifferenceReport:
    """Check analytic gradients for every (or a sampled subset of) entry.

    max_entries_per_param caps the number of coordinates probed per
    parameter; rng picks which ones (required when a cap is active).
    """
    loss = loss_fn()
    backward(loss, params=store.tensors())
    analytic = {name: t.grad.copy() for name, t in store.items()}

    names = list(param_names) if param_names is not None else store.names()
    max_err = 0.0
    worst = ("", ())
    failures: list[tuple[str, tuple[int, ...], float, float, float]] = []
    n_checked = 0
    for name in names:
        t = store[name]
        size = t.data.size
        if max_entries_per_param is not None and size > max_entries_per_param:
            if rng is None:
                raise ValueError("finite_difference_check: sampling requires an rng")
            flat_indices = rng.choice(size, size=max_entries_per_param, replace=False)
        else:
            flat_indices = np.arange(size)
        flat = t.data.reshape(-1)
        for fi in flat_indices:
            fi = int(fi)
            original = flat[fi]
            flat[fi] = original + h
            up = loss_fn().item()
            flat[fi] = original - h
            down = loss_fn().item()
            flat[fi] = original
            fd = (up - down) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[fi])
            denom = max(abs(a), abs(fd))
            err = abs(a - fd) / denom if denom >= 1e-6 else abs(a - fd)
            n_checked += 1
            if err > max_err:
                max_err = err
                worst = (name, np.unravel_index(fi, t.data.shape))
            if err >= tol:
                failures.append((name, tuple(np.unravel_index(fi, t.data.shape)), a, fd, err))
    return FiniteDifferenceReport(
        max_rel_error=max_err,
        n_checked=n_checked,
        worst_param=worst[0],
        worst_index=tuple(worst[1]),
        failures=failures,
    )
