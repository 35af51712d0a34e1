"""Truncated power-series arithmetic over float64 coefficients.

A :class:`Series` holds the coefficients ``c[0]..c[N]`` of a degree-N
truncation.  Binary operations truncate to the shorter operand; coefficients
beyond the stored order are undefined, never implicitly zero.  Series values
are immutable and every operation is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_ORDER = 256

__all__ = [
    "DEFAULT_ORDER",
    "Series",
    "constant",
    "identity",
    "mul",
    "compose",
    "exp_series",
    "log_series",
    "integrate_series",
    "differentiate_series",
    "eval_at",
    "reciprocal",
    "power",
    "taylor_shift",
]


@dataclass(frozen=True)
class Series:
    """Degree-N truncation of a formal power series in one variable."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must form a non-empty 1-d vector")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    def __len__(self) -> int:
        return self.coeffs.size

    def __getitem__(self, j: int) -> float:
        return float(self.coeffs[j])

    def __add__(self, other: "Series | float") -> "Series":
        if isinstance(other, Series):
            n = min(self.order, other.order)
            return Series(self.coeffs[: n + 1] + other.coeffs[: n + 1])
        c = self.coeffs.copy()
        c[0] += other
        return Series(c)

    __radd__ = __add__

    def __sub__(self, other: "Series | float") -> "Series":
        return self + (-other if not isinstance(other, Series) else Series(-other.coeffs))

    def __neg__(self) -> "Series":
        return Series(-self.coeffs)

    def __mul__(self, other: "Series | float") -> "Series":
        if isinstance(other, Series):
            return mul(self, other)
        return Series(self.coeffs * other)

    __rmul__ = __mul__


def constant(value: float, order: int = DEFAULT_ORDER) -> Series:
    c = np.zeros(order + 1)
    c[0] = value
    return Series(c)


def identity(order: int = DEFAULT_ORDER) -> Series:
    """The series of s itself."""
    c = np.zeros(order + 1)
    if order >= 1:
        c[1] = 1.0
    return Series(c)


def mul(a: Series, b: Series) -> Series:
    """Cauchy product truncated at the shorter operand's order."""
    n = min(a.order, b.order)
    return Series(np.convolve(a.coeffs[: n + 1], b.coeffs[: n + 1])[: n + 1])


def taylor_shift(a: Series, x0: float) -> Series:
    """Coefficients of ``a(x0 + s)`` by repeated synthetic division.

    Loses roughly one decimal digit per 64 orders when coefficient signs mix.
    """
    b = a.coeffs.copy()
    n = b.size
    if x0 == 0.0:
        return Series(b)
    for k in range(n - 1):
        for j in range(n - 2, k - 1, -1):
            b[j] += x0 * b[j + 1]
    return Series(b)


def compose(outer: Series, inner: Series) -> Series:
    """Coefficients of ``outer(inner(s))`` to the shorter operand's order.

    A nonzero constant term of ``inner`` is handled by re-centering ``outer``
    with a Taylor shift before the Horner pass.
    """
    n = min(outer.order, inner.order)
    oc = Series(outer.coeffs[: n + 1])
    w = inner.coeffs[: n + 1].copy()
    if w[0] != 0.0:
        oc = taylor_shift(oc, w[0])
        w[0] = 0.0
    b = oc.coeffs
    acc = np.zeros(n + 1)
    acc[0] = b[n]
    for k in range(n - 1, -1, -1):
        acc = np.convolve(acc, w)[: n + 1]
        acc[0] += b[k]
    return Series(acc)


def _exp_coeffs(g: np.ndarray) -> np.ndarray:
    if g[0] > 700.0:
        raise OverflowError(f"exp of series with constant term {g[0]!r} overflows")
    n = g.size
    e = np.empty(n)
    e[0] = math.exp(g[0])
    w = np.arange(1, n) * g[1:]
    for k in range(1, n):
        e[k] = np.dot(w[:k], e[k - 1 :: -1]) / k
    return e


def exp_series(g: Series) -> Series:
    """exp(g) via the differential recurrence E' = E g', E(0) = e^{g_0}."""
    return Series(_exp_coeffs(g.coeffs))


def log_series(e: Series) -> Series:
    """log(e) for a series with positive constant term."""
    c = e.coeffs
    if c[0] <= 0.0:
        raise ValueError("log of a series requires a positive constant term")
    n = c.size
    g = np.empty(n)
    g[0] = math.log(c[0])
    for k in range(1, n):
        s = np.dot(np.arange(1, k) * g[1:k], c[k - 1 : 0 : -1]) if k > 1 else 0.0
        g[k] = (k * c[k] - s) / (k * c[0])
    return Series(g)


def integrate_series(g: Series) -> Series:
    """Term-wise antiderivative with zero constant term; order grows by one."""
    c = g.coeffs
    out = np.empty(c.size + 1)
    out[0] = 0.0
    out[1:] = c / np.arange(1, c.size + 1)
    return Series(out)


def differentiate_series(g: Series) -> Series:
    """Term-wise derivative; order drops by one."""
    c = g.coeffs
    if c.size == 1:
        return Series(np.zeros(1))
    return Series(c[1:] * np.arange(1, c.size))


def eval_at(g: Series, s: float) -> float:
    """Horner evaluation of the truncation at |s| <= 1."""
    if abs(s) > 1.0:
        raise ValueError("evaluation point must satisfy |s| <= 1")
    acc = 0.0
    for c in g.coeffs[::-1]:
        acc = acc * s + c
    return float(acc)


def _reciprocal_coeffs(a: np.ndarray) -> np.ndarray:
    if a[0] == 0.0:
        raise ValueError("reciprocal requires a nonzero constant term")
    n = a.size
    b = np.empty(n)
    b[0] = 1.0 / a[0]
    for k in range(1, n):
        b[k] = -np.dot(a[1 : k + 1], b[k - 1 :: -1]) / a[0]
    return b


def reciprocal(a: Series) -> Series:
    """1 / a for a series with nonzero constant term."""
    return Series(_reciprocal_coeffs(a.coeffs))


def _pow_coeffs(w: np.ndarray, alpha: float) -> np.ndarray:
    """Coefficients of w(s)**alpha for w with positive constant term."""
    w0 = w[0]
    if w0 <= 0.0:
        raise ValueError("fractional power requires a positive constant term")
    n = w.size
    p = np.empty(n)
    p[0] = w0 ** alpha
    mw = np.arange(1, n) * w[1:]
    for k in range(1, n):
        t1 = np.dot(mw[:k], p[k - 1 :: -1])
        t2 = np.dot(np.arange(1, k) * p[1:k], w[k - 1 : 0 : -1]) if k > 1 else 0.0
        p[k] = (alpha * t1 - t2) / (k * w0)
    return p


def power(w: Series, alpha: float) -> Series:
    """w**alpha for real alpha; exact coefficient recurrence, no composition."""
    return Series(_pow_coeffs(w.coeffs, alpha))
