"""
Finite-difference gradient checker.

The error for one coordinate is |analytic − central| / max(1, |central|);
the checker reports the maximum over all checked coordinates.
"""
import logging
from typing import Callable, Dict, Mapping

import attrs
import numpy as np

from dvbe_lab.exceptions import NumericError, ValidationError

from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


@attrs.define(frozen=True)
class GradCheckReport:
    errors: Dict[str, float]

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tolerance: float) -> bool:
        return self.max_error < tolerance

    def worst(self) -> str:
        return max(self.errors, key=self.errors.get) if self.errors else ""


def _scalar(value: Tensor, where: str) -> float:
    if not isinstance(value, Tensor) or value.size != 1:
        raise ValidationError(f"gradient check needs a scalar function output ({where})")
    result = float(value.data.reshape(-1)[0])
    if not np.isfinite(result):
        raise NumericError(f"non-finite function value {where}", component="grad_check")
    return result


def check_parameters(fn: Callable[[], Tensor], params: Mapping[str, Tensor], step: float = 1e-5) -> GradCheckReport:
    """
    Compare analytic gradients of fn() w.r.t. each tensor in `params` against
    central differences. `fn` must read the tensors' current .data. Each
    tensor's requires_grad flag is restored on return.
    """
    if step <= 0:
        raise ValidationError(f"step must be positive, got {step}")

    flags = {name: tensor.requires_grad for name, tensor in params.items()}
    try:
        return _check(fn, params, step)
    finally:
        for name, tensor in params.items():
            tensor.requires_grad = flags[name]


def _check(fn: Callable[[], Tensor], params: Mapping[str, Tensor], step: float) -> GradCheckReport:
    for tensor in params.values():
        tensor.zero_grad()
        tensor.requires_grad = True
        tensor.data = np.ascontiguousarray(tensor.data)
    output = fn()
    _scalar(output, "at the base point")
    output.backward()
    analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in params.items()}

    errors = {}
    with no_grad():
        for name, tensor in params.items():
            worst = 0.0
            flat = tensor.data.reshape(-1)
            grad = analytic[name].reshape(-1)
            for index in range(flat.size):
                original = flat[index]
                flat[index] = original + step
                upper = _scalar(fn(), f"at {name}[{index}] + step")
                flat[index] = original - step
                lower = _scalar(fn(), f"at {name}[{index}] - step")
                flat[index] = original
                central = (upper - lower) / (2.0 * step)
                worst = max(worst, abs(grad[index] - central) / max(1.0, abs(central)))
            errors[name] = worst
            tensor.zero_grad()

    report = GradCheckReport(errors=errors)
    logger.debug(f"Gradient check: max error {report.max_error:.3e} at {report.worst() or '-'}")
    return report


def grad_check(fn: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-5) -> float:
    """Max relative error of fn's gradient at x (fn maps a Tensor to a scalar Tensor)."""
    point = Tensor(x.data if isinstance(x, Tensor) else x, requires_grad=True, name="x")
    return check_parameters(lambda: fn(point), {"x": point}, step).max_error
