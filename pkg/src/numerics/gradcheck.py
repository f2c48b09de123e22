import typing

import numpy as np

from src.numerics.tensor import ParamSet

__all__ = ("finite_diff_gradient", "max_relative_error")


def finite_diff_gradient(
    f: typing.Callable[[ParamSet], float], params: ParamSet, h: float = 1e-3
) -> dict:
    """Central differences of ``f`` for every scalar entry of ``params``.

    Evaluation happens on a float64 copy of the parameters; ``f`` must be
    deterministic.
    """
    work = params.copy(dtype=np.float64)
    grads = {}
    for name in work:
        flat = work[name].data.reshape(-1)
        grad = np.zeros(flat.shape, dtype=np.float64)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            upper = float(f(work))
            flat[i] = original - h
            lower = float(f(work))
            flat[i] = original
            grad[i] = (upper - lower) / (2.0 * h)
        grads[name] = grad.reshape(work[name].shape)
    return grads


def max_relative_error(analytic: dict, numeric: dict, floor: float = 1e-6) -> float:
    """Largest relative error over entries whose numeric gradient exceeds ``floor``."""
    worst = 0.0
    for name, expected in numeric.items():
        actual = np.asarray(analytic[name], dtype=np.float64)
        significant = np.abs(expected) > floor
        if not significant.any():
            continue
        diff = np.abs(actual[significant] - expected[significant])
        scale = np.maximum(np.abs(actual[significant]), np.abs(expected[significant]))
        worst = max(worst, float(np.max(diff / scale)))
    return worst
