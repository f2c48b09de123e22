"""Differentiable primitives the PixelCNN needs, plus stable numpy helpers.

Forward kernels accumulate in float64 and store in the dtype of their
inputs. The convolution accumulates one tap and one input channel at a time
with plain elementwise multiply-add, so the value at a pixel depends only on
the pixels it reads and never on the size of the surrounding array.
"""
import typing

import numpy as np

from src.numerics.tensor import Tensor, record_op
from src.utils.errors import ValidationError

__all__ = (
    "conv2d_same",
    "elementwise",
    "relu",
    "add",
    "mul",
    "scale",
    "clamp_min",
    "take_channels",
    "reduce_sum",
    "reduce_mean",
    "logsumexp",
    "log_softmax",
    "softmax",
    "softplus",
    "sigmoid",
)


def _dtype(*tensors: Tensor):
    return np.result_type(*(t.dtype for t in tensors))


def _f64(tensor: Tensor) -> np.ndarray:
    return tensor.data.astype(np.float64, copy=False)


def conv2d_same(
    input: Tensor,
    kernel: Tensor,
    bias: Tensor,
    taps: typing.Optional[typing.Sequence[tuple]] = None,
) -> Tensor:
    """Stride-1 convolution with zero "same" padding, NHWC layout.

    ``taps`` restricts the computation to the given (row, col) kernel
    positions; every other tap is treated as a zero weight and never read.
    """
    if input.data.ndim != 4:
        raise ValidationError(f"input must be (N, H, W, C), got {input.shape}")
    if kernel.data.ndim != 4:
        raise ValidationError(f"kernel must be (kh, kw, Ci, Co), got {kernel.shape}")
    n, h, w, ci = input.shape
    kh, kw, kci, co = kernel.shape
    if kh % 2 == 0:
        raise ValidationError(f"kernel height kh={kh} must be odd")
    if kw % 2 == 0:
        raise ValidationError(f"kernel width kw={kw} must be odd")
    if kci != ci:
        raise ValidationError(f"kernel input channels Ci={kci} != input channels {ci}")
    if bias.shape != (co,):
        raise ValidationError(f"bias shape {bias.shape} != output channels ({co},)")
    if taps is None:
        taps = [(r, c) for r in range(kh) for c in range(kw)]

    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    padded = np.pad(_f64(input), ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    weights = _f64(kernel)

    acc = np.broadcast_to(_f64(bias), (n, h, w, co)).copy()
    for r, c in taps:
        window = padded[:, r : r + h, c : c + w, :]
        for channel in range(ci):
            acc += window[..., channel : channel + 1] * weights[r, c, channel]
    out = Tensor(acc.astype(_dtype(input, kernel, bias)))

    def adjoint(grad):
        grad_padded = np.zeros_like(padded)
        grad_kernel = np.zeros_like(weights)
        for r, c in taps:
            window = padded[:, r : r + h, c : c + w, :]
            grad_kernel[r, c] = np.tensordot(window, grad, axes=([0, 1, 2], [0, 1, 2]))
            grad_padded[:, r : r + h, c : c + w, :] += grad @ weights[r, c].T
        grad_input = grad_padded[:, ph : ph + h, pw : pw + w, :]
        return grad_input, grad_kernel, grad.sum(axis=(0, 1, 2))

    return record_op("conv2d_same", (input, kernel, bias), out, adjoint)


def _check_broadcast(a: Tensor, b: Tensor) -> bool:
    """True when ``b`` broadcasts over the trailing channel dim of ``a``."""
    if a.shape == b.shape:
        return False
    if b.data.ndim == 1 and a.data.ndim >= 1 and b.shape[0] == a.shape[-1]:
        return True
    raise ValidationError(f"incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(grad, broadcast):
    return grad.reshape(-1, grad.shape[-1]).sum(axis=0) if broadcast else grad


def relu(x: Tensor) -> Tensor:
    data = _f64(x)
    out = Tensor(np.maximum(data, 0.0).astype(x.dtype))
    return record_op("relu", (x,), out, lambda grad: (grad * (data > 0),))


def add(a: Tensor, b: Tensor) -> Tensor:
    broadcast = _check_broadcast(a, b)
    out = Tensor((_f64(a) + _f64(b)).astype(_dtype(a, b)))
    return record_op(
        "add", (a, b), out, lambda grad: (grad, _unbroadcast(grad, broadcast))
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    broadcast = _check_broadcast(a, b)
    da, db = _f64(a), _f64(b)
    out = Tensor((da * db).astype(_dtype(a, b)))
    return record_op(
        "mul",
        (a, b),
        out,
        lambda grad: (grad * db, _unbroadcast(grad * da, broadcast)),
    )


def scale(x: Tensor, factor: float) -> Tensor:
    out = Tensor((_f64(x) * factor).astype(x.dtype))
    return record_op("scale", (x,), out, lambda grad: (grad * factor,))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    data = _f64(x)
    out = Tensor(np.maximum(data, floor).astype(x.dtype))
    return record_op("clamp_min", (x,), out, lambda grad: (grad * (data > floor),))


def take_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``[start, stop)`` of the trailing channel dim."""
    out = Tensor(x.data[..., start:stop].copy())

    def adjoint(grad):
        full = np.zeros(x.shape, dtype=np.float64)
        full[..., start:stop] = grad
        return (full,)

    return record_op("take_channels", (x,), out, adjoint)


def reduce_sum(x: Tensor) -> Tensor:
    out = Tensor(np.array(_f64(x).sum(), dtype=x.dtype))
    return record_op(
        "sum", (x,), out, lambda grad: (np.broadcast_to(grad, x.shape).copy(),)
    )


def reduce_mean(x: Tensor) -> Tensor:
    return scale(reduce_sum(x), 1.0 / x.data.size)


_ELEMENTWISE = {"relu": relu, "add": add, "mul": mul, "scale": scale}


def elementwise(op: str, *args):
    """Dispatch ``relu``, ``add``, ``mul`` or ``scale`` by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValidationError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# stable helpers on plain arrays


def logsumexp(a: np.ndarray, axis=-1, keepdims=False) -> np.ndarray:
    peak = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - peak), axis=axis, keepdims=True)) + peak
    return out if keepdims else np.squeeze(out, axis=axis)


def log_softmax(a: np.ndarray, axis=-1) -> np.ndarray:
    return a - logsumexp(a, axis=axis, keepdims=True)


def softmax(a: np.ndarray, axis=-1) -> np.ndarray:
    return np.exp(log_softmax(a, axis=axis))


def softplus(a: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, a)


def sigmoid(a: np.ndarray) -> np.ndarray:
    return np.exp(-softplus(-a))
