"""Forward-mode dual numbers carrying a dense vector of partial derivatives.

The elementary functions at the bottom of this module accept either plain
floats or :class:`Dual` values, so geometry and loss code written against
them is differentiable without modification.
"""

import math

import numpy as np

from .exceptions import UndefinedAtPoint


class Dual:
    """Scalar value with partials ``d`` w.r.t. a fixed parameter set."""

    __slots__ = ("v", "d")

    def __init__(self, v, d):
        self.v = float(v)
        self.d = d

    @classmethod
    def variable(cls, value, index, size):
        d = np.zeros(size)
        d[index] = 1.0
        return cls(value, d)

    def __repr__(self):
        return f"Dual({self.v!r}, {self.d!r})"

    # arithmetic

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.v + other.v, self.d + other.d)
        return Dual(self.v + other, self.d)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.v - other.v, self.d - other.d)
        return Dual(self.v - other, self.d)

    def __rsub__(self, other):
        return Dual(other - self.v, -self.d)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.v * other.v, self.v * other.d + other.v * self.d)
        return Dual(self.v * other, self.d * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.v
            return Dual(self.v * inv, (self.d - self.v * inv * other.d) * inv)
        return Dual(self.v / other, self.d / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.v
        return Dual(other * inv, -other * inv * inv * self.d)

    def __neg__(self):
        return Dual(-self.v, -self.d)

    def __pos__(self):
        return self

    def __abs__(self):
        # subgradient +1 at zero
        return self if self.v >= 0 else -self

    def __pow__(self, n):
        if isinstance(n, Dual):
            return exp(n * log(self))
        if n == 2:
            return self * self
        return Dual(self.v**n, n * self.v ** (n - 1) * self.d)

    # comparisons act on the value only

    def __lt__(self, other):
        return self.v < value_of(other)

    def __le__(self, other):
        return self.v <= value_of(other)

    def __gt__(self, other):
        return self.v > value_of(other)

    def __ge__(self, other):
        return self.v >= value_of(other)


def value_of(x):
    """Strip derivative information."""
    return x.v if isinstance(x, Dual) else x


def partials_of(x, size):
    if isinstance(x, Dual):
        return np.array(x.d, dtype=float)
    return np.zeros(size)


def is_dual(x):
    return isinstance(x, Dual)


def sqrt(x):
    if isinstance(x, Dual):
        if x.v <= 0.0:
            raise UndefinedAtPoint(f"sqrt is not differentiable at {x.v}")
        r = math.sqrt(x.v)
        return Dual(r, x.d * (0.5 / r))
    return math.sqrt(x)


def exp(x):
    if isinstance(x, Dual):
        e = math.exp(x.v)
        return Dual(e, x.d * e)
    return math.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(math.log(x.v), x.d / x.v)
    return math.log(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(math.sin(x.v), x.d * math.cos(x.v))
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(math.cos(x.v), -x.d * math.sin(x.v))
    return math.cos(x)


def atan2(y, x):
    if not (isinstance(y, Dual) or isinstance(x, Dual)):
        return math.atan2(y, x)
    yv, xv = value_of(y), value_of(x)
    r2 = xv * xv + yv * yv
    if r2 == 0.0:
        raise UndefinedAtPoint("atan2 is not differentiable at the origin")
    size = len(y.d) if isinstance(y, Dual) else len(x.d)
    dy = partials_of(y, size)
    dx = partials_of(x, size)
    return Dual(math.atan2(yv, xv), (xv * dy - yv * dx) / r2)


def maximum(a, b):
    """max with ties resolved toward the first argument."""
    return b if b > a else a


def minimum(a, b):
    return b if b < a else a
