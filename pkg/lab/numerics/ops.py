"""
Differentiable kernels. Each op computes its forward value with numpy/scipy
and registers an analytic vector-Jacobian product.

Broadcasting follows numpy but only where the models need it: biases over
leading dimensions, gates over positions or channels, batched matmul against
a shared weight.
"""
from typing import Sequence, Union

import numpy as np
from scipy.special import expit, logsumexp

from dvbe_lab.exceptions import DimensionError, NumericError

from .tensor import Tensor, as_tensor

ArrayLike = Union[Tensor, np.ndarray, float, int, Sequence]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast", (a.shape, b.shape))


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(grad):
        return _unbroadcast(grad, a.shape), -_unbroadcast(grad, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), backward, "mul")


hadamard = mul


def scale(a: ArrayLike, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)

    def backward(grad):
        return (grad * factor,)

    return Tensor.from_op(a.data * factor, (a,), backward, "scale")


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product over the last two axes; leading axes batch."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions differ for {a.shape} x {b.shape}", (a.shape, b.shape))

    def backward(grad):
        grad_a = grad @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ grad
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return Tensor.from_op(np.matmul(a.data, b.data), (a, b), backward, "matmul")


def transpose(a: ArrayLike) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise DimensionError(f"transpose needs rank >= 2, got {a.shape}", (a.shape,))

    def backward(grad):
        return (np.swapaxes(grad, -1, -2),)

    return Tensor.from_op(np.swapaxes(a.data, -1, -2).copy(), (a,), backward, "transpose")


def reshape(a: ArrayLike, shape: tuple) -> Tensor:
    a = as_tensor(a)
    original = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {original} as {shape}", (original, shape))

    def backward(grad):
        return (grad.reshape(original),)

    return Tensor.from_op(out.copy(), (a,), backward, "reshape")


def sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, shape).copy(),)

    return Tensor.from_op(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward, "sum")


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def sum_rows(a: ArrayLike) -> Tensor:
    """Sum over the row axis (second to last); a K×E tensor becomes E."""
    return sum(a, axis=-2)


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(grad):
        return (grad * out,)

    return Tensor.from_op(out, (a,), backward, "exp")


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericError("log of a non-positive value", component="log")

    def backward(grad):
        return (grad / a.data,)

    return Tensor.from_op(np.log(a.data), (a,), backward, "log")


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(grad):
        return (grad * mask,)

    return Tensor.from_op(np.where(mask, a.data, 0.0), (a,), backward, "relu")


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)

    def backward(grad):
        return (grad * out * (1.0 - out),)

    return Tensor.from_op(out, (a,), backward, "sigmoid")


def softmax(z: ArrayLike, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`."""
    z = as_tensor(z)
    if z.ndim == 0 or z.shape[axis] == 0:
        raise DimensionError(f"softmax over an empty axis, shape {z.shape}", (z.shape,))
    shifted = z.data - z.data.max(axis=axis, keepdims=True)
    out = np.exp(shifted)
    out /= out.sum(axis=axis, keepdims=True)

    def backward(grad):
        inner = (grad * out).sum(axis=axis, keepdims=True)
        return (out * (grad - inner),)

    return Tensor.from_op(out, (z,), backward, "softmax")


def log_softmax(z: ArrayLike, axis: int = -1) -> Tensor:
    z = as_tensor(z)
    if z.ndim == 0 or z.shape[axis] == 0:
        raise DimensionError(f"log_softmax over an empty axis, shape {z.shape}", (z.shape,))
    out = z.data - logsumexp(z.data, axis=axis, keepdims=True)
    probs = np.exp(out)

    def backward(grad):
        return (grad - probs * grad.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (z,), backward, "log_softmax")


def l2_normalize(a: ArrayLike, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """a / max(||a||, eps) along `axis`."""
    a = as_tensor(a)
    norm = np.sqrt((a.data ** 2).sum(axis=axis, keepdims=True))
    clamped = np.maximum(norm, eps)
    out = a.data / clamped

    def backward(grad):
        inner = (grad * out).sum(axis=axis, keepdims=True)
        # below eps the op is a fixed scaling
        projected = np.where(norm > eps, grad - out * inner, grad)
        return (projected / clamped,)

    return Tensor.from_op(out, (a,), backward, "l2_normalize")


def signed_sqrt(a: ArrayLike, eps: float = 1e-8) -> Tensor:
    """sign(a)·(sqrt(|a|+eps) − sqrt(eps)): continuous at 0 with a finite slope."""
    a = as_tensor(a)
    root = np.sqrt(np.abs(a.data) + eps)
    out = np.sign(a.data) * (root - np.sqrt(eps))

    def backward(grad):
        return (grad / (2.0 * root),)

    return Tensor.from_op(out, (a,), backward, "signed_sqrt")


def bilinear(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Σₙ aₙᵀbₙ over the position axis: (..., N, C) x (..., N, D) → (..., C, D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"bilinear: position axes differ for {a.shape} and {b.shape}", (a.shape, b.shape))
    out = np.einsum("...nc,...nd->...cd", a.data, b.data)

    def backward(grad):
        grad_a = np.einsum("...nd,...cd->...nc", b.data, grad)
        grad_b = np.einsum("...nc,...cd->...nd", a.data, grad)
        return grad_a, grad_b

    return Tensor.from_op(out, (a, b), backward, "bilinear")


def stop_gradient(a: ArrayLike) -> Tensor:
    return Tensor(as_tensor(a).data)
