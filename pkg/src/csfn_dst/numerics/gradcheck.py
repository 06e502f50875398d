from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .module import Parameter
from .tensor import Tensor

# Below this magnitude gradients are compared absolutely rather than relatively.
ABS_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tol: float
    per_param: dict = field(default_factory=dict)
    worst: tuple | None = None
    floor: float = ABS_FLOOR

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tol)


def relative_error(analytic: float, numeric: float, floor: float = ABS_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def noise_floor(f: float, h: float, tol: float, dtype=np.float64) -> float:
    """Gradient magnitude below which central differences cannot resolve ``tol``.

    Roundoff in f(x+h) - f(x-h) is about eps * |f| / h; a tenfold margin over
    that, divided by the tolerance, gives the denominator floor.
    """
    eps = np.finfo(dtype).eps
    return max(ABS_FLOOR, 10.0 * eps * max(abs(f), 1.0) / (h * tol))


def grad_check(
    model_fn: Callable[[], Tensor],
    params: list[Parameter],
    h: float = 1e-5,
    tol: float = 1e-4,
    per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients of ``model_fn()`` with central differences.

    ``model_fn`` must be deterministic and return a scalar tensor built from
    ``params``. With ``per_param`` set, that many coordinates are sampled from
    each parameter instead of checking all of them.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    base = model_fn()
    base.backward()
    floor = noise_floor(float(base.data), h, tol, base.data.dtype)
    analytic = {id(p): p.grad.copy() for p in params}

    worst_err, worst, n = 0.0, None, 0
    per = {}
    for p in params:
        flat = p.data.reshape(-1)
        if per_param is None or per_param >= flat.size:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=per_param, replace=False)
        g = analytic[id(p)].reshape(-1)
        p_worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            f_plus = float(model_fn().data)
            flat[c] = orig - h
            f_minus = float(model_fn().data)
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = relative_error(float(g[c]), numeric, floor)
            n += 1
            p_worst = max(p_worst, err)
            if err > worst_err:
                worst_err, worst = err, (p.name, int(c), float(g[c]), numeric)
        per[p.name] = p_worst
    return GradCheckReport(max_rel_error=float(worst_err), n_checked=n, tol=tol, per_param=per, worst=worst, floor=floor)
