"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Operations executed while a :class:`Tape` is active are recorded together with
a vector-Jacobian closure; :func:`backward` replays the records in reverse and
accumulates gradients into every ``requires_grad`` tensor reachable from the
loss.  Everything is float64 and single-threaded by design.
"""

import numpy as np

from .errors import DimensionError, DeterminismError, NumericsError, UsageError

_TAPE_STACK = []


def _check_finite(arr, what="tensor values"):
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{what} contain NaN/Inf")


class Tensor:
    """Dense N-d float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # convenience arithmetic (records on the active tape like the free functions)
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


class Tape:
    """Ordered record of differentiable operations, consumed once by backward."""

    def __init__(self):
        self._records = []  # (out, inputs, vjp)
        self._consumed = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def __len__(self):
        return len(self._records)


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def record(out_data, inputs, vjp):
    """Wrap op output in a Tensor and record the backward rule if a tape is active.

    ``inputs`` must contain only Tensors, aligned with the grads returned by
    ``vjp(grad_out)``.  A returned grad of None means "no gradient".
    """
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None:
        tape._records.append((out, tuple(inputs), vjp))
    return out


def backward(loss, tape):
    """Populate .grad of every requires_grad tensor reachable from ``loss``."""
    if tape._consumed:
        raise UsageError("backward was already run on this tape")
    tape._consumed = True
    if loss.data.size != 1:
        raise UsageError("backward requires a scalar loss")

    grads = {id(loss): np.ones_like(loss.data)}
    tensors = {id(loss): loss}
    for out, inputs, vjp in reversed(tape._records):
        g = grads.get(id(out))
        if g is None:
            continue
        input_grads = vjp(g)
        for t, gi in zip(inputs, input_grads):
            if gi is None:
                continue
            tensors[id(t)] = t
            acc = grads.get(id(t))
            grads[id(t)] = gi if acc is None else acc + gi

    for tid, t in tensors.items():
        if t.requires_grad:
            g = np.asarray(grads[tid], dtype=np.float64)
            if g.shape != t.data.shape:
                g = np.broadcast_to(g, t.data.shape).copy()
            _check_finite(g, "gradients")
            t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverses numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / reduction primitives

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return record(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return record(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return record(a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.data.shape),
                             _unbroadcast(g * a.data, b.data.shape)))


def square(a):
    return record(a.data ** 2, (a,), lambda g: (2.0 * a.data * g,))


def sqrt(a):
    out = np.sqrt(a.data)

    def vjp(g):
        denom = 2.0 * np.maximum(out, 1e-300)
        return (g / denom,)

    return record(out, (a,), vjp)


def relu(a):
    mask = a.data > 0.0
    return record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def tsum(a, axis=None):
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    return record(out, (a,), vjp)


def tmean(a, axis=None):
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)


def take_rows(a, indices):
    """Gather along the leading axis."""
    idx = np.asarray(indices, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return record(a.data[idx], (a,), vjp)


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Adam with per-parameter first/second moment buffers.

    A parameter whose grad is None is treated as zero gradient: its moments
    stay zero and the parameter is left unchanged.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            _check_finite(p.data, "parameter values after Adam step")

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# gradient checking

class GradCheckReport:
    def __init__(self, max_rel_error, tol, h, n_checked):
        self.max_rel_error = max_rel_error
        self.tol = tol
        self.h = h
        self.n_checked = n_checked
        self.passed = max_rel_error < tol

    def __repr__(self):
        status = "pass" if self.passed else "FAIL"
        return (f"GradCheckReport({status}, max_rel_error={self.max_rel_error:.3e}, "
                f"tol={self.tol:.1e}, h={self.h:.1e}, n={self.n_checked})")


def _rel_error(a, n):
    # relative for large values, absolute below 1e-2 so near-zero gradients
    # do not explode the quotient
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-2)


def gradcheck(f, x, h=1e-5, tol=1e-4):
    """Compare the analytic gradient of scalar-valued ``f`` at ``x`` with
    central finite differences.

    ``f`` takes one Tensor and returns a scalar Tensor; it must be
    deterministic (two forward passes are compared exactly).
    """
    probe = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(probe)
    y_again = f(Tensor(x.data.copy()))
    if not np.array_equal(y.data, y_again.data):
        raise DeterminismError("two forward passes of f disagree")

    backward(y, tape)
    analytic = probe.grad if probe.grad is not None else np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        f_plus = f(Tensor(bumped.reshape(x.data.shape))).item()
        bumped[i] = flat[i] - h
        f_minus = f(Tensor(bumped.reshape(x.data.shape))).item()
        numeric[i] = (f_plus - f_minus) / (2.0 * h)

    err = _rel_error(analytic.reshape(-1), numeric)
    max_err = float(err.max()) if err.size else 0.0
    return GradCheckReport(max_err, tol, h, flat.size)
