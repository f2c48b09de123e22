"""Dense tensors and the computation record used for reverse-mode gradients.

A :class:`ComputationRecord` is entered as a context manager around a forward
pass; every primitive executed while it is active appends one
:class:`RecordedOp` carrying the adjoint closure of that primitive.
:func:`backward` replays the record in reverse execution order.
"""
import contextvars
import typing
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from src.utils.errors import ValidationError

__all__ = (
    "Tensor",
    "ParamSet",
    "RecordedOp",
    "ComputationRecord",
    "record_op",
    "backward",
)

_FLOAT_TYPES = (np.float32, np.float64)

_active_record = contextvars.ContextVar("active_record", default=None)


class Tensor:
    """An N-dimensional float array in row-major order.

    Image batches use the (batch, height, width, channels) layout. Storage is
    float32 unless a float64 array is given explicitly.
    """

    __slots__ = ("data", "name")

    def __init__(self, data, name: typing.Optional[str] = None, dtype=None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype.type not in _FLOAT_TYPES:
            array = array.astype(np.float32)
        if any(dim <= 0 for dim in array.shape):
            raise ValidationError(f"tensor dims must be positive, got {array.shape}")
        self.data = array
        self.name = name

    @classmethod
    def zeros(cls, *shape: int, name=None, dtype=np.float32) -> "Tensor":
        return cls(np.zeros(shape, dtype=dtype), name=name)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"


class ParamSet(Mapping):
    """Named parameters, iterated in sorted name order."""

    def __init__(self, tensors: Mapping = None):
        self._tensors = {}
        for name, value in (tensors or {}).items():
            tensor = value if isinstance(value, Tensor) else Tensor(value)
            tensor.name = name
            self._tensors[name] = tensor

    def __getitem__(self, name) -> Tensor:
        return self._tensors[name]

    def __iter__(self):
        return iter(sorted(self._tensors))

    def __len__(self):
        return len(self._tensors)

    def arrays(self) -> dict:
        return {name: self[name].data for name in self}

    def copy(self, dtype=None) -> "ParamSet":
        return ParamSet(
            {
                name: np.array(self[name].data, dtype=dtype or self[name].dtype)
                for name in self
            }
        )

    def __repr__(self):
        return f"ParamSet({', '.join(self)})"


@dataclass(frozen=True)
class RecordedOp:
    name: str
    inputs: tuple
    output: Tensor
    adjoint: typing.Callable


class ComputationRecord:
    """Ordered list of executed primitives of one forward pass."""

    def __init__(self):
        self.ops = []
        self._token = None

    def __enter__(self):
        self._token = _active_record.set(self)
        return self

    def __exit__(self, *exc):
        _active_record.reset(self._token)
        self._token = None

    def __len__(self):
        return len(self.ops)

    def append(self, op: RecordedOp):
        self.ops.append(op)


def record_op(name: str, inputs: tuple, output: Tensor, adjoint) -> Tensor:
    """Register a primitive on the active record, if any, and return its output.

    ``adjoint`` maps the output gradient to one gradient (or ``None``) per input.
    """
    record = _active_record.get()
    if record is not None:
        record.append(RecordedOp(name, tuple(inputs), output, adjoint))
    return output


def backward(
    loss: Tensor, record: ComputationRecord, params: ParamSet = None
) -> dict:
    """Gradients of a scalar ``loss`` for every named tensor in ``record``.

    When ``params`` is given, parameters that did not take part in the loss
    get exact zero gradients.
    """
    if loss.data.size != 1:
        raise ValidationError(f"loss must be scalar, got shape {loss.shape}")

    grads = {id(loss): np.ones(loss.shape, dtype=np.float64)}
    named = {}
    for op in reversed(record.ops):
        grad_out = grads.pop(id(op.output), None)
        if grad_out is None:
            continue
        for tensor, grad in zip(op.inputs, op.adjoint(grad_out)):
            if grad is None:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = np.asarray(grad, dtype=np.float64)
            if tensor.name is not None:
                named[tensor.name] = tensor

    result = {
        name: grads[id(tensor)].astype(tensor.dtype) for name, tensor in named.items()
    }
    for name, tensor in (params or {}).items():
        if name not in result:
            result[name] = np.zeros_like(tensor.data)
    return dict(sorted(result.items()))
