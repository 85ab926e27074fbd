"""Tape-based reverse-mode differentiation over numpy arrays.

Operations only record onto the tape when one is active (``with Tape() as t``)
and at least one input requires a gradient; outside a tape every op is a plain
numpy computation, which is how inference runs.
"""

import numpy as np

from .errors import TapeError

_ACTIVE = []


class Var:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Var(shape={self.value.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_var(other)))

    def __rsub__(self, other):
        return add(as_var(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


class Tape:
    def __init__(self):
        self.records = []
        self._outputs = set()

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def backward(self, out, grad=None):
        """Accumulate d(out)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
        if id(out) not in self._outputs:
            raise TapeError("backward() called on a value that was not recorded on this tape")
        grads = {id(out): np.ones_like(out.value) if grad is None else np.asarray(grad, dtype=np.float64)}
        leaves = {}
        for node_out, inputs, vjp in reversed(self.records):
            g = grads.pop(id(node_out), None)
            if g is None:
                continue
            in_grads = vjp(g)
            for v, gv in zip(inputs, in_grads):
                if gv is None or not v.requires_grad:
                    continue
                key = id(v)
                if key in grads:
                    grads[key] = grads[key] + gv
                else:
                    grads[key] = gv
                if key not in self._outputs:
                    leaves[key] = v
        for key, v in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            v.grad = g if v.grad is None else v.grad + g
        self.records.clear()
        self._outputs.clear()


def _recording(inputs):
    return bool(_ACTIVE) and any(v.requires_grad for v in inputs)


def record(value, inputs, vjp):
    """Wrap ``value`` in a Var and register ``vjp`` (upstream -> per-input grads)."""
    inputs = tuple(inputs)
    if not _recording(inputs):
        return Var(value)
    out = Var(value, requires_grad=True)
    tape = _ACTIVE[-1]
    tape.records.append((out, inputs, vjp))
    tape._outputs.add(id(out))
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = as_var(a), as_var(b)
    sa, sb = a.shape, b.shape
    return record(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a):
    return record(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_var(a), as_var(b)
    av, bv = a.value, b.value
    return record(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def total(a):
    shape = a.shape
    return record(np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def relu(a):
    mask = a.value > 0
    return record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a):
    s = 1.0 / (1.0 + np.exp(-a.value))
    return record(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp_clamped(a, lo, hi):
    """exp(a) clamped to [lo, hi]; the gradient is zero where the clamp binds."""
    e = np.exp(a.value)
    c = np.clip(e, lo, hi)
    inside = (e > lo) & (e < hi)
    return record(c, (a,), lambda g: (g * c * inside,))


def concat_columns(parts):
    widths = [p.shape[1] for p in parts]
    edges = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(parts)))

    return record(np.concatenate([p.value for p in parts], axis=1), parts, vjp)


def take_rows(a, idx):
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]

    def vjp(g):
        out = np.zeros((n,) + g.shape[1:])
        np.add.at(out, idx, g)
        return (out,)

    return record(a.value[idx], (a,), vjp)


def noise_add(a, noise):
    return record(a.value + noise, (a,), lambda g: (g,))
