from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import backward
from .params import ParameterSet


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    analytic: float
    numeric: float
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def finite_diff_check(loss_fn, params: ParameterSet, tolerance: float = 1e-4, n_coords: int = 100,
                      step: float = 1e-5, rng: np.random.Generator | None = None,
                      floor: float = 1e-7) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss_fn(params)`` must return a scalar Tensor and be deterministic.
    Coordinates are drawn uniformly over all parameters (all of them when
    there are fewer than ``n_coords``). Relative error is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    grads = backward(loss_fn(params), params)
    coords = [(name, idx) for name, t in params.items() for idx in np.ndindex(t.shape)]
    if len(coords) > n_coords:
        pick = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in sorted(pick)]
    worst = (0.0, "", (), 0.0, 0.0)
    for name, idx in coords:
        arr = params[name].data
        orig = arr[idx]
        arr[idx] = orig + step
        up = loss_fn(params).item()
        arr[idx] = orig - step
        down = loss_fn(params).item()
        arr[idx] = orig
        num = (up - down) / (2 * step)
        ana = float(grads[name].data[idx])
        rel = abs(ana - num) / max(abs(ana), abs(num), floor)
        if rel >= worst[0]:
            worst = (rel, name, idx, ana, num)
    return GradCheckReport(worst[0], worst[1], tuple(int(i) for i in worst[2]), worst[3], worst[4], len(coords),
                           tolerance)
