"""Compare analytic gradients against central finite differences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError
from .tensor import Tensor, backward, zero_grads


@dataclass
class GradcheckReport:
    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance

    def lines(self) -> list[str]:
        return [f"{name}: max rel err {err:.3e}" for name, err in self.max_rel_error.items()]


def _scalar(closure: Callable[[], Tensor]) -> float:
    value = closure().item()
    if not math.isfinite(value):
        raise NumericError("non-finite loss during finite-difference evaluation")
    return value


def gradcheck(closure: Callable[[], Tensor], params: Sequence[Tensor],
              tolerance: float = 1e-4, step: float = 1e-5,
              floor: float = 1e-5) -> GradcheckReport:
    """Check every entry of every parameter.

    The relative error of an entry is ``|a - n| / max(|a|, |n|, floor)``;
    ``floor`` keeps entries whose true gradient is (near) zero from being
    judged on round-off alone: with a loss of order 10 and ``step=1e-5`` the
    central difference carries about 2e-10 of absolute noise, so an entry
    below the floor must instead agree to ``tolerance * floor`` (1e-9).
    """
    zero_grads(params)
    loss = closure()
    if not math.isfinite(loss.item()):
        raise NumericError("non-finite loss")
    backward(loss)
    report = GradcheckReport(tolerance)
    for i, p in enumerate(params):
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.data)
        base = p.data
        for idx in np.ndindex(*base.shape):
            orig = base[idx]
            plus = base.copy()
            plus[idx] = orig + step
            p.data = plus
            f_plus = _scalar(closure)
            minus = base.copy()
            minus[idx] = orig - step
            p.data = minus
            f_minus = _scalar(closure)
            numeric[idx] = (f_plus - f_minus) / (2.0 * step)
        p.data = base
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        err = float(np.max(np.abs(analytic - numeric) / denom)) if base.size else 0.0
        report.max_rel_error[p.name or f"param{i}"] = err
    zero_grads(params)
    return report
