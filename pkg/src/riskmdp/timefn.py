"""Piecewise exponential-polynomial functions of time on [0, inf).

Each piece is ``p(t) * exp(-decay * (t - anchor))`` on ``[start, end)`` with
``p`` given by ascending coefficients in absolute time. Pure polynomials
(``decay == 0``) are what model files contain; the decaying factor appears
only after discounting or finite-horizon reformulation.

Integrals are closed-form (incomplete gamma for the decaying pieces), which
is what lets the simulator accumulate cost exactly and invert the
cumulative hazard without quadrature.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq
from scipy.special import gammainc

INVERSION_XTOL = 1e-12


@dataclass(frozen=True)
class Piece:
    start: float
    end: float
    coeffs: tuple[float, ...]
    decay: float = 0.0
    anchor: float = 0.0

    @property
    def is_zero(self) -> bool:
        return not self.trimmed

    @cached_property
    def trimmed(self) -> tuple[float, ...]:
        c = list(self.coeffs)
        while c and c[-1] == 0.0:
            c.pop()
        return tuple(c)

    def poly(self) -> Polynomial:
        return Polynomial(self.coeffs)

    def value(self, t):
        if isinstance(t, float):
            v = _horner(self.trimmed, t)
            return v * math.exp(-self.decay * (t - self.anchor)) if self.decay else v
        v = np.polynomial.polynomial.polyval(t, self.coeffs)
        if self.decay:
            v = v * np.exp(-self.decay * (np.asarray(t) - self.anchor))
        return v

    def integral(self, a: float, b: float) -> float:
        """Integral over [a, b] (a, b inside the piece; b may be inf)."""
        c = self.trimmed
        if b <= a or not c:
            return 0.0
        if self.decay == 0.0:
            if math.isinf(b):
                return math.inf
            anti = (0.0,) + tuple(ck / (k + 1) for k, ck in enumerate(c))
            return _horner(anti, b) - _horner(anti, a)
        beta = self.decay
        scale = math.exp(-beta * (a - self.anchor))
        if len(c) == 1:
            frac = 1.0 if math.isinf(b) else -math.expm1(-beta * (b - a))
            return c[0] * frac / beta * scale
        h = b - a
        total = 0.0
        for k, d in enumerate(_taylor_shift(c, a)):
            if d == 0.0:
                continue
            frac = 1.0 if math.isinf(h) else gammainc(k + 1, beta * h)
            total += d * math.exp(math.lgamma(k + 1) - (k + 1) * math.log(beta)) * frac
        return total * scale


def _horner(coeffs, t: float) -> float:
    v = 0.0
    for c in reversed(coeffs):
        v = v * t + c
    return v


def _taylor_shift(coeffs, a: float) -> list[float]:
    """Coefficients of p(a + s) in powers of s."""
    n = len(coeffs)
    out = list(coeffs)
    for i in range(n - 1):
        for j in range(n - 2, i - 1, -1):
            out[j] += a * out[j + 1]
    return out


class TimeFn:
    """A function of time built from consecutive :class:`Piece` objects."""

    __slots__ = ("pieces", "_starts")

    def __init__(self, pieces: Sequence[Piece]):
        pieces = tuple(pieces)
        if not pieces or pieces[0].start != 0.0 or not math.isinf(pieces[-1].end):
            raise ValueError("pieces must cover [0, inf)")
        for p, nxt in zip(pieces, pieces[1:]):
            if p.end != nxt.start or not p.start < p.end:
                raise ValueError("pieces must be consecutive and nonempty")
        self.pieces = pieces
        self._starts = [p.start for p in pieces]

    # -- construction -----------------------------------------------------

    @classmethod
    def constant(cls, value: float) -> "TimeFn":
        return cls([Piece(0.0, math.inf, (float(value),))])

    @classmethod
    def from_spec(cls, spec: Iterable[tuple[float, Sequence[float]]]) -> "TimeFn":
        """Build from ``[(until, coeffs), ...]``; the last ``until`` is inf."""
        pieces = []
        start = 0.0
        for until, coeffs in spec:
            until = math.inf if until is None else float(until)
            pieces.append(Piece(start, until, tuple(float(c) for c in coeffs)))
            start = until
        return cls(pieces)

    def to_spec(self) -> list[tuple[float, tuple[float, ...]]]:
        if any(p.decay for p in self.pieces):
            raise ValueError("only polynomial time functions are serializable")
        return [(p.end, p.coeffs) for p in self.pieces]

    @property
    def is_constant(self) -> bool:
        return len(self.pieces) == 1 and len(self.pieces[0].coeffs) <= 1 \
            and self.pieces[0].decay == 0.0

    @property
    def constant_value(self) -> float:
        if not self.is_constant:
            raise ValueError("not a constant function")
        c = self.pieces[0].coeffs
        return c[0] if c else 0.0

    def times_exp(self, decay: float, anchor: float = 0.0) -> "TimeFn":
        """Multiply by exp(-decay * (t - anchor))."""
        if decay == 0.0:
            return self
        out = []
        for p in self.pieces:
            # exp(-d1(t-a1)) exp(-d2(t-a2)) = exp(-(d1+d2)(t-a')) with a' the weighted anchor
            d = p.decay + decay
            anchor = (p.decay * p.anchor + decay * anchor) / d
            out.append(Piece(p.start, p.end, p.coeffs, d, anchor))
        return TimeFn(out)

    @staticmethod
    def splice(before: "TimeFn", after: "TimeFn", at: float) -> "TimeFn":
        """``before`` on [0, at), ``after`` on [at, inf)."""
        if not at > 0:
            raise ValueError("splice point must be positive")
        out = []
        for p in before.pieces:
            if p.start >= at:
                break
            out.append(Piece(p.start, min(p.end, at), p.coeffs, p.decay, p.anchor))
        for p in after.pieces:
            if p.end <= at:
                continue
            out.append(Piece(max(p.start, at), p.end, p.coeffs, p.decay, p.anchor))
        return TimeFn(out)

    # -- evaluation ---------------------------------------------------------

    def piece_index(self, t: float, left: bool = False) -> int:
        """Index of the piece holding ``t``; ``left`` picks the left limit at breakpoints."""
        if left:
            return max(bisect.bisect_left(self._starts, t) - 1, 0)
        return bisect.bisect_right(self._starts, t) - 1

    def __call__(self, t: float, left: bool = False) -> float:
        return float(self.pieces[self.piece_index(t, left)].value(float(t)))

    def evaluate(self, ts, left: bool = False) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if len(self.pieces) == 1:
            return np.broadcast_to(self.pieces[0].value(ts), ts.shape).astype(float)
        side = "left" if left else "right"
        idx = np.searchsorted(self._starts, ts, side=side) - 1
        idx = np.clip(idx, 0, len(self.pieces) - 1)
        out = np.empty_like(ts)
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = self.pieces[i].value(ts[mask])
        return out

    def breakpoints(self) -> list[float]:
        return self._starts[1:]

    def integral(self, a: float, b: float) -> float:
        """Closed-form integral over [a, b], ``b`` possibly inf."""
        if b <= a:
            return 0.0
        total = 0.0
        for p in self.pieces[self.piece_index(a):]:
            if p.start >= b:
                break
            total += p.integral(max(a, p.start), min(b, p.end))
            if math.isinf(total):
                return math.inf
        return total

    def negative_ranges(self) -> list[tuple[float, float]]:
        """Pieces on which the function takes a negative value."""
        bad = []
        for p in self.pieces:
            poly = p.poly().trim()
            if poly.degree() < 1:
                if poly.coef[0] < 0:
                    bad.append((p.start, p.end))
                continue
            pts = [p.start]
            if not math.isinf(p.end):
                pts.append(p.end)
            elif poly.coef[-1] < 0:
                bad.append((p.start, p.end))
                continue
            for r in poly.deriv().roots():
                if abs(r.imag) < 1e-12 and p.start < r.real < p.end:
                    pts.append(r.real)
            if min(poly(np.array(pts))) < -1e-12 * max(1.0, max(abs(c) for c in poly.coef)):
                bad.append((p.start, p.end))
        return bad

    def __repr__(self) -> str:
        if self.is_constant:
            return f"TimeFn.constant({self.constant_value!r})"
        return f"TimeFn({list(self.pieces)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeFn) and self.pieces == other.pieces

    def __hash__(self) -> int:
        return hash(self.pieces)


def invert_hazard(segments: Iterable[tuple[float, float, TimeFn]], target: float) -> float:
    """Smallest t with cumulative hazard over ``segments`` equal to ``target``.

    ``segments`` yields ``(a, b, rate)`` with consecutive intervals; the last
    one must end at inf. Returns inf when the total hazard stays below target.
    """
    remaining = target
    for a, b, fn in segments:
        i = fn.piece_index(a)
        while i < len(fn.pieces):
            p = fn.pieces[i]
            lo, hi = max(a, p.start), min(b, p.end)
            if lo >= hi:
                if p.start >= b:
                    break
                i += 1
                continue
            mass = p.integral(lo, hi)
            if mass < remaining:
                remaining -= mass
                i += 1
                continue
            return lo + _solve_in_piece(p, lo, hi, remaining)
    return math.inf


def _solve_in_piece(p: Piece, lo: float, hi: float, target: float) -> float:
    c = p.trimmed
    if p.decay == 0.0 and len(c) == 1:
        return target / c[0]
    if p.decay == 0.0 and len(c) == 2:
        r0 = c[0] + c[1] * lo
        disc = r0 * r0 + 2.0 * c[1] * target
        return 2.0 * target / (r0 + math.sqrt(max(disc, 0.0)))
    f = lambda s: p.integral(lo, lo + s) - target  # noqa: E731
    width = hi - lo
    if math.isinf(width):
        width = 1.0
        while f(width) < 0:
            width *= 2.0
    return brentq(f, 0.0, width, xtol=INVERSION_XTOL, rtol=4 * np.finfo(float).eps)
