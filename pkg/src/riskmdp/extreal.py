"""Nonnegative extended reals on [0, inf].

Conventions: 0/0 = 0, 0*inf = 0, a/0 = inf for a > 0, inf - inf = inf.
Infinity is a tag, never a float, so 0*inf cannot silently become NaN.

The array helpers at the bottom apply the same rules to float arrays
(where ``np.inf`` stands for the tag) for the vectorized solver kernels.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

Number = Union[int, float]


class ExtReal:
    """A value in [0, inf] with ``inf`` carried as a flag."""

    __slots__ = ("_value", "_inf")

    def __init__(self, value: "ExtReal | Number | str" = 0.0):
        if isinstance(value, ExtReal):
            self._value, self._inf = value._value, value._inf
            return
        if isinstance(value, str):
            if value.strip().lower() not in ("inf", "+inf", "infinity"):
                raise ValueError(f"cannot parse {value!r} as ExtReal")
            self._value, self._inf = 0.0, True
            return
        v = float(value)
        if math.isnan(v):
            raise ValueError("NaN is not an extended real")
        if v < 0:
            raise ValueError(f"ExtReal must be nonnegative, got {v!r}")
        if math.isinf(v):
            self._value, self._inf = 0.0, True
        else:
            self._value, self._inf = v, False

    @classmethod
    def inf(cls) -> "ExtReal":
        return cls("inf")

    @property
    def is_inf(self) -> bool:
        return self._inf

    @property
    def is_zero(self) -> bool:
        return not self._inf and self._value == 0.0

    def __float__(self) -> float:
        return math.inf if self._inf else self._value

    def __repr__(self) -> str:
        return "ExtReal('inf')" if self._inf else f"ExtReal({self._value!r})"

    def __str__(self) -> str:
        return "inf" if self._inf else repr(self._value)

    def __hash__(self) -> int:
        return hash(("inf",)) if self._inf else hash(self._value)

    def _key(self):
        return (1, 0.0) if self._inf else (0, self._value)

    def __eq__(self, other) -> bool:
        try:
            other = _coerce(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other) -> bool:
        return self._key() < _coerce(other)._key()

    def __le__(self, other) -> bool:
        return self._key() <= _coerce(other)._key()

    def __gt__(self, other) -> bool:
        return self._key() > _coerce(other)._key()

    def __ge__(self, other) -> bool:
        return self._key() >= _coerce(other)._key()

    def __add__(self, other) -> "ExtReal":
        return xadd(self, other)

    __radd__ = __add__

    def __mul__(self, other) -> "ExtReal":
        return xmul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "ExtReal":
        return xdiv(self, other)

    def __rtruediv__(self, other) -> "ExtReal":
        return xdiv(other, self)

    def to_json(self) -> "float | str":
        return "inf" if self._inf else self._value

    @classmethod
    def from_json(cls, obj) -> "ExtReal":
        if isinstance(obj, bool):
            raise TypeError("booleans are not extended reals")
        return cls(obj)


INF = ExtReal.inf()
ZERO = ExtReal(0.0)
ONE = ExtReal(1.0)


def _coerce(x) -> ExtReal:
    return x if isinstance(x, ExtReal) else ExtReal(x)


def xadd(a, b) -> ExtReal:
    a, b = _coerce(a), _coerce(b)
    if a.is_inf or b.is_inf:
        return INF
    return ExtReal(a._value + b._value)


def xmul(a, b) -> ExtReal:
    """Product with 0*inf = inf*0 = 0."""
    a, b = _coerce(a), _coerce(b)
    if a.is_zero or b.is_zero:
        return ZERO
    if a.is_inf or b.is_inf:
        return INF
    return ExtReal(a._value * b._value)


def xdiv(a, b) -> ExtReal:
    """Quotient with 0/0 = 0 and a/0 = inf for a > 0."""
    a, b = _coerce(a), _coerce(b)
    if a.is_zero:
        return ZERO
    if b.is_zero or a.is_inf and not b.is_inf:
        return INF
    if b.is_inf:
        # inf/inf never arises in the solvers; treat like 1/0 = inf
        return INF if a.is_inf else ZERO
    return ExtReal(a._value / b._value)


def xexp(a) -> ExtReal:
    a = _coerce(a)
    if a.is_inf:
        return INF
    try:
        return ExtReal(math.exp(a._value))
    except OverflowError:
        return INF


def no_jump_term(total_rate, total_cost) -> ExtReal:
    """e^{-Q} * e^{C}: utility of never jumping again.

    An infinite total rate wins over an infinite total cost (0*inf = 0).
    """
    q, c = _coerce(total_rate), _coerce(total_cost)
    if q.is_inf:
        return ZERO
    if c.is_inf:
        return INF
    d = c._value - q._value
    return xexp(ExtReal(d)) if d >= 0 else ExtReal(math.exp(d))


# -- array forms (np.inf plays the role of the tag) --------------------------

def xmul_array(a, b) -> np.ndarray:
    """Elementwise product honoring 0*inf = 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    zero = (a == 0.0) | (b == 0.0)
    with np.errstate(invalid="ignore"):
        out = a * b
    return np.where(zero, 0.0, out)


def xdot_array(weights, values) -> np.ndarray:
    """Contract the last axis of ``weights`` against ``values`` in [0, inf].

    Entries with zero weight never see an infinite value.
    """
    weights = np.asarray(weights, dtype=float)
    values = np.asarray(values, dtype=float)
    inf = np.isinf(values)
    finite_part = weights @ np.where(inf, 0.0, values)
    hits_inf = (weights[..., inf] > 0.0).any(axis=-1)
    return np.where(hits_inf, np.inf, finite_part)
