from typing import Dict

import numpy as np

from dvbe_lab.exceptions import ValidationError
from numerics import Tensor


class SGD:
    """
    Momentum SGD over a fixed set of tensors: v ← μv + g, p ← p − lr·v.
    Tensors without a gradient in a step are left untouched.
    """

    def __init__(self, params: Dict[str, Tensor], lr: float, momentum: float = 0.0):
        if lr < 0 or not 0 <= momentum < 1:
            raise ValidationError(f"Invalid optimizer settings lr={lr}, momentum={momentum}")
        self.params = dict(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = {name: np.zeros_like(tensor.data) for name, tensor in self.params.items()}

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.zero_grad()

    def step(self):
        for name, tensor in self.params.items():
            if tensor.grad is None:
                continue
            velocity = self.velocity[name]
            velocity *= self.momentum
            velocity += tensor.grad
            if self.lr:
                tensor.data = tensor.data - self.lr * velocity
