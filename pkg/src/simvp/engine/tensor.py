"""Dense tensor with reverse-mode autodiff over an explicit tape.

Ops (in ops.py) record a backward closure onto the active tape; backward()
replays the tape in exact reverse recording order. Gradients accumulate
into .grad, so a second backward without zeroing sums leaf gradients.
"""

import os
from contextlib import contextmanager

import numpy as np

from ..errors import ConfigurationError, NumericsError, UsageError

_DTYPES = {"float32": np.float32, "float64": np.float64}
default_dtype = _DTYPES.get(os.environ.get("SIMVP_DTYPE", "float32"))
if default_dtype is None:
    raise ConfigurationError("SIMVP_DTYPE must be float32 or float64")

MAX_AXES = 5


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else default_dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(default_dtype)
        if arr.ndim > MAX_AXES:
            raise ConfigurationError(f"tensors support up to {MAX_AXES} axes, got {arr.ndim}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad = None
        self._node = False  # produced by a recorded op on some tape

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def item(self):
        if self.data.size != 1:
            raise UsageError("item() on a non-scalar tensor")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"


_active_tape = None
_grad_enabled = True


class Tape:
    """Ordered record of differentiable ops; one training step = one tape."""

    def __init__(self):
        self._nodes = []  # (out, backward_fn), in recording order
        self._prev = None

    def __enter__(self):
        global _active_tape
        self._prev = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._prev
        return False

    def record(self, out, backward_fn):
        out._node = True
        self._nodes.append((out, backward_fn))

    def backward(self, loss):
        """Accumulate dloss/dleaf into every requires_grad leaf's .grad."""
        if loss.data.size != 1:
            raise UsageError("backward requires a scalar loss")
        if not loss._node:
            raise UsageError("loss was not produced on this tape")
        # intermediate grads are scratch: reset them, keep leaf grads so that
        # repeated backward calls sum into leaves
        for out, _ in self._nodes:
            out.grad = None
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._nodes):
            if out.grad is not None:
                fn(out.grad)


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def active_tape():
    return _active_tape if _grad_enabled else None


def accumulate_grad(t, g):
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def make_result(data, inputs, backward_builder):
    """Wrap an op result, check finiteness, and record backward if needed.

    backward_builder(out) -> fn(gout); fn accumulates into the inputs.
    """
    if not np.all(np.isfinite(data)):
        raise NumericsError("forward op produced non-finite values")
    tape = active_tape()
    needs = tape is not None and any(i.requires_grad for i in inputs)
    out = Tensor(data, requires_grad=needs, dtype=data.dtype)
    if needs:
        tape.record(out, backward_builder(out))
    return out
