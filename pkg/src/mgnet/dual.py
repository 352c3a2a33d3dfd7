"""Forward-mode automatic differentiation carriers.

DualScalar pairs one float value with one tangent and is the reference
semantics for every derivative rule used here. DualArray is the batched
form the training engine runs on: the value is a float64 array and the
tangent carries one extra leading axis, one slot per parameter being
differentiated. No operation ever reduces across that leading axis, so
propagating k tangents at once is bitwise identical to k separate passes.

Elementwise math goes through the module-level functions (exp, log, tanh,
...) which dispatch on the operand type, letting model and loss code run
unchanged on plain arrays, DualScalar and DualArray.
"""

from __future__ import annotations

import math

import numpy as np


class DualScalar:
    """Scalar dual number: value + derivative, chain rule on every op."""

    __slots__ = ("value", "derivative")

    def __init__(self, value, derivative=0.0):
        self.value = float(value)
        self.derivative = float(derivative)

    def __repr__(self):
        return f"DualScalar({self.value!r}, {self.derivative!r})"

    def __add__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value + other.value, self.derivative + other.derivative)
        return DualScalar(self.value + other, self.derivative)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value - other.value, self.derivative - other.derivative)
        return DualScalar(self.value - other, self.derivative)

    def __rsub__(self, other):
        return DualScalar(other - self.value, -self.derivative)

    def __mul__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(
                self.value * other.value,
                self.derivative * other.value + self.value * other.derivative,
            )
        return DualScalar(self.value * other, self.derivative * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(
                self.value / other.value,
                (self.derivative * other.value - self.value * other.derivative)
                / (other.value * other.value),
            )
        return DualScalar(self.value / other, self.derivative / other)

    def __rtruediv__(self, other):
        return DualScalar(
            other / self.value, -other * self.derivative / (self.value * self.value)
        )

    def __pow__(self, n):
        return DualScalar(self.value**n, n * self.value ** (n - 1) * self.derivative)

    def __neg__(self):
        return DualScalar(-self.value, -self.derivative)

    # Comparisons act on the value part; tangents carry no order.
    def __lt__(self, other):
        return self.value < _value_of(other)

    def __le__(self, other):
        return self.value <= _value_of(other)

    def __gt__(self, other):
        return self.value > _value_of(other)

    def __ge__(self, other):
        return self.value >= _value_of(other)

    def exp(self):
        e = math.exp(self.value)
        return DualScalar(e, e * self.derivative)

    def log(self):
        return DualScalar(math.log(self.value), self.derivative / self.value)

    def log1p(self):
        return DualScalar(math.log1p(self.value), self.derivative / (1.0 + self.value))

    def tanh(self):
        t = math.tanh(self.value)
        return DualScalar(t, (1.0 - t * t) * self.derivative)

    def cosh(self):
        return DualScalar(math.cosh(self.value), math.sinh(self.value) * self.derivative)

    def sqrt(self):
        r = math.sqrt(self.value)
        return DualScalar(r, 0.5 * self.derivative / r)

    def __abs__(self):
        s = math.copysign(1.0, self.value) if self.value != 0.0 else 0.0
        return DualScalar(abs(self.value), s * self.derivative)


def _value_of(x):
    if isinstance(x, (DualScalar, DualArray)):
        return x.value if isinstance(x, DualScalar) else x.val
    return x


def _lift(dot, val_ndim, out_ndim):
    """Insert singleton axes after the tangent axis so dot broadcasts to out."""
    if out_ndim == val_ndim:
        return dot
    return dot.reshape(dot.shape[:1] + (1,) * (out_ndim - val_ndim) + dot.shape[1:])


class DualArray:
    """Array-valued dual number; tangent shape is (k,) + value shape."""

    __slots__ = ("val", "dot")
    __array_priority__ = 1000
    __array_ufunc__ = None  # keep numpy from absorbing us into object arrays

    def __init__(self, val, dot):
        self.val = np.asarray(val, dtype=np.float64)
        self.dot = np.asarray(dot, dtype=np.float64)
        if self.dot.shape[1:] != self.val.shape:
            raise ValueError(
                f"tangent shape {self.dot.shape} does not extend value shape {self.val.shape}"
            )

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    @property
    def mT(self):
        return DualArray(np.swapaxes(self.val, -1, -2), np.swapaxes(self.dot, -1, -2))

    def __repr__(self):
        return f"DualArray(shape={self.val.shape}, tangents={self.dot.shape[0]})"

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return DualArray(
            self.val.reshape(shape), self.dot.reshape(self.dot.shape[:1] + tuple(shape))
        )

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return DualArray(self.val[idx], self.dot[(slice(None),) + idx])

    def __neg__(self):
        return DualArray(-self.val, -self.dot)

    def __add__(self, other):
        if isinstance(other, DualArray):
            val = self.val + other.val
            return DualArray(
                val,
                _lift(self.dot, self.val.ndim, val.ndim)
                + _lift(other.dot, other.val.ndim, val.ndim),
            )
        val = self.val + np.asarray(other)
        dot = _lift(self.dot, self.val.ndim, val.ndim)
        if dot.shape[1:] != val.shape:
            # constant broadcast widened the value; tangent must follow
            dot = np.broadcast_to(dot, dot.shape[:1] + val.shape)
        return DualArray(val, dot)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if isinstance(other, DualArray) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, DualArray):
            val = self.val * other.val
            return DualArray(
                val,
                _lift(self.dot, self.val.ndim, val.ndim) * other.val
                + self.val * _lift(other.dot, other.val.ndim, val.ndim),
            )
        other = np.asarray(other)
        val = self.val * other
        return DualArray(val, _lift(self.dot, self.val.ndim, val.ndim) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualArray):
            val = self.val / other.val
            la = _lift(self.dot, self.val.ndim, val.ndim)
            lb = _lift(other.dot, other.val.ndim, val.ndim)
            return DualArray(val, (la * other.val - self.val * lb) / (other.val * other.val))
        other = np.asarray(other)
        val = self.val / other
        return DualArray(val, _lift(self.dot, self.val.ndim, val.ndim) / other)

    def __rtruediv__(self, other):
        other = np.asarray(other)
        val = other / self.val
        la = _lift(self.dot, self.val.ndim, val.ndim)
        return DualArray(val, -other * la / (self.val * self.val))

    def __pow__(self, n):
        val = self.val**n
        return DualArray(val, n * self.val ** (n - 1) * self.dot)

    def __matmul__(self, other):
        if isinstance(other, DualArray):
            val = np.matmul(self.val, other.val)
            batch = val.ndim - 2
            la = self.dot.reshape(
                self.dot.shape[:1] + (1,) * (batch - (self.val.ndim - 2)) + self.val.shape
            )
            lb = other.dot.reshape(
                other.dot.shape[:1] + (1,) * (batch - (other.val.ndim - 2)) + other.val.shape
            )
            return DualArray(val, np.matmul(la, other.val) + np.matmul(self.val, lb))
        other = np.asarray(other)
        val = np.matmul(self.val, other)
        batch = val.ndim - 2
        la = self.dot.reshape(
            self.dot.shape[:1] + (1,) * (batch - (self.val.ndim - 2)) + self.val.shape
        )
        return DualArray(val, np.matmul(la, other))

    def __rmatmul__(self, other):
        other = np.asarray(other)
        val = np.matmul(other, self.val)
        batch = val.ndim - 2
        lb = self.dot.reshape(
            self.dot.shape[:1] + (1,) * (batch - (self.val.ndim - 2)) + self.val.shape
        )
        return DualArray(val, np.matmul(other, lb))

    # Comparisons act on values, yielding plain boolean arrays.
    def __lt__(self, other):
        return self.val < _value_of(other)

    def __le__(self, other):
        return self.val <= _value_of(other)

    def __gt__(self, other):
        return self.val > _value_of(other)

    def __ge__(self, other):
        return self.val >= _value_of(other)

    def _map_axis(self, axis):
        if axis is None:
            return tuple(range(1, self.dot.ndim))
        if isinstance(axis, int):
            axis = (axis,)
        return tuple(a if a < 0 else a + 1 for a in axis)

    def sum(self, axis=None):
        return DualArray(self.val.sum(axis=axis), self.dot.sum(axis=self._map_axis(axis)))

    def mean(self, axis=None):
        return DualArray(self.val.mean(axis=axis), self.dot.mean(axis=self._map_axis(axis)))

    def exp(self):
        e = np.exp(self.val)
        return DualArray(e, e * self.dot)

    def log(self):
        return DualArray(np.log(self.val), self.dot / self.val)

    def log1p(self):
        return DualArray(np.log1p(self.val), self.dot / (1.0 + self.val))

    def tanh(self):
        t = np.tanh(self.val)
        return DualArray(t, (1.0 - t * t) * self.dot)

    def cosh(self):
        return DualArray(np.cosh(self.val), np.sinh(self.val) * self.dot)

    def sqrt(self):
        r = np.sqrt(self.val)
        return DualArray(r, 0.5 * self.dot / r)

    def __abs__(self):
        return DualArray(np.abs(self.val), np.sign(self.val) * self.dot)


def _dispatch(x, fname, npfunc):
    if isinstance(x, (DualScalar, DualArray)):
        return getattr(x, fname)()
    return npfunc(x)


def exp(x):
    return _dispatch(x, "exp", np.exp)


def log(x):
    return _dispatch(x, "log", np.log)


def log1p(x):
    return _dispatch(x, "log1p", np.log1p)


def tanh(x):
    return _dispatch(x, "tanh", np.tanh)


def cosh(x):
    return _dispatch(x, "cosh", np.cosh)


def sqrt(x):
    return _dispatch(x, "sqrt", np.sqrt)


def absolute(x):
    if isinstance(x, (DualScalar, DualArray)):
        return abs(x)
    return np.abs(x)


def where(cond, a, b):
    """Select elementwise on a plain boolean mask; tangents follow the pick."""
    if isinstance(a, DualArray) or isinstance(b, DualArray):
        va = a.val if isinstance(a, DualArray) else np.asarray(a, dtype=np.float64)
        vb = b.val if isinstance(b, DualArray) else np.asarray(b, dtype=np.float64)
        val = np.where(cond, va, vb)
        da = _lift(a.dot, a.val.ndim, val.ndim) if isinstance(a, DualArray) else 0.0
        db = _lift(b.dot, b.val.ndim, val.ndim) if isinstance(b, DualArray) else 0.0
        return DualArray(val, np.where(cond, da, db) + np.zeros_like(val))
    if isinstance(a, DualScalar) or isinstance(b, DualScalar):
        pick = a if cond else b
        return pick if isinstance(pick, DualScalar) else DualScalar(pick)
    return np.where(cond, a, b)


def matT(x):
    """Transpose the trailing two axes (value semantics of ndarray.mT)."""
    if isinstance(x, DualArray):
        return x.mT
    return np.swapaxes(np.asarray(x), -1, -2)


def value_of(x):
    """Strip the tangent: plain value of a dual, identity otherwise."""
    return _value_of(x)
