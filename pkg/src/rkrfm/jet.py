"""Truncated 2-D jets: a field and its spatial partials up to a fixed order.

Multi-indices ``(ax, ay)`` are stored graded by total order, then by
``ay``::

    (0,0) (1,0) (0,1) (2,0) (1,1) (0,2) (3,0) ...

A jet of order ``r`` holds ``(r+1)(r+2)/2`` arrays of shape
``(n_points, n_components)``.  Sums, scalar multiples and pointwise
products (Leibniz rule) all stay at the operands' common order.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

MAX_ORDER = 4


def n_multi(order: int) -> int:
    return (order + 1) * (order + 2) // 2


def multi_index(ax: int, ay: int) -> int:
    """Position of ``(ax, ay)`` in the graded ordering."""
    if ax < 0 or ay < 0:
        raise ValueError(f"negative derivative order ({ax}, {ay})")
    k = ax + ay
    return k * (k + 1) // 2 + ay


@lru_cache(maxsize=None)
def multi_indices(order: int) -> tuple[tuple[int, int], ...]:
    return tuple((k - ay, ay) for k in range(order + 1) for ay in range(k + 1))


def check_midx(midx, cap: int = MAX_ORDER) -> tuple[int, int]:
    ax, ay = (int(v) for v in midx)
    if ax < 0 or ay < 0:
        raise ValueError(f"negative derivative order {midx}")
    if ax + ay > cap:
        raise ValueError(f"derivative order {ax + ay} exceeds cap {cap}")
    return ax, ay


@lru_cache(maxsize=None)
def _leibniz_terms(order: int):
    terms = []
    for a, (ax, ay) in enumerate(multi_indices(order)):
        for bx in range(ax + 1):
            for by in range(ay + 1):
                coef = comb(ax, bx) * comb(ay, by)
                terms.append((a, multi_index(bx, by), multi_index(ax - bx, ay - by), float(coef)))
    return tuple(terms)


@lru_cache(maxsize=None)
def _shift_table(order: int, dx: int, dy: int) -> np.ndarray:
    return np.array([multi_index(ax + dx, ay + dy) for ax, ay in multi_indices(order)])


class Jet:
    """Values and spatial derivatives of a vector field at a point set."""

    __slots__ = ("data",)

    def __init__(self, data):
        data = np.asarray(data, dtype=float)
        if data.ndim != 3:
            raise ValueError("jet data must have shape (n_multi, n_points, n_components)")
        order = _order_from_count(data.shape[0])
        if order > MAX_ORDER:
            raise ValueError(f"jet order {order} exceeds cap {MAX_ORDER}")
        self.data = data

    @classmethod
    def zeros(cls, order: int, n_points: int, n_components: int) -> "Jet":
        return cls(np.zeros((n_multi(order), n_points, n_components)))

    @classmethod
    def constant(cls, values, order: int, n_points: int) -> "Jet":
        """Spatially constant field: all derivatives vanish."""
        values = np.atleast_1d(np.asarray(values, dtype=float))
        out = np.zeros((n_multi(order), n_points, values.size))
        out[0] = values
        return cls(out)

    @property
    def order(self) -> int:
        return _order_from_count(self.data.shape[0])

    @property
    def n_points(self) -> int:
        return self.data.shape[1]

    @property
    def n_components(self) -> int:
        return self.data.shape[2]

    @property
    def value(self) -> np.ndarray:
        return self.data[0]

    def __getitem__(self, midx) -> np.ndarray:
        ax, ay = midx
        return self.data[multi_index(ax, ay)]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.data[: n_multi(order)])

    def derivative(self, dx: int, dy: int) -> "Jet":
        """Jet of ``d^(dx,dy)`` of this field, ``dx + dy`` orders lower."""
        out = self.order - dx - dy
        if out < 0:
            raise ValueError(f"jet of order {self.order} cannot supply a ({dx},{dy}) derivative")
        return Jet(self.data[_shift_table(out, dx, dy)])

    def laplacian(self) -> "Jet":
        return self.derivative(2, 0) + self.derivative(0, 2)

    def components(self, idx) -> "Jet":
        return Jet(self.data[:, :, idx].reshape(self.data.shape[0], self.n_points, -1))

    def points(self, idx) -> "Jet":
        return Jet(self.data[:, idx, :])

    def _coerce(self, other) -> tuple["Jet", "Jet"]:
        r = min(self.order, other.order)
        a = self if self.order == r else self.truncate(r)
        b = other if other.order == r else other.truncate(r)
        return a, b

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return Jet(a.data + b.data)
        out = self.data.copy()
        out[0] += other
        return Jet(out)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return Jet(a.data - b.data)
        out = self.data.copy()
        out[0] -= other
        return Jet(out)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Jet(-self.data)

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return Jet(_leibniz(a.data, b.data, a.order))
        # scalars or per-component constants broadcast over the last axis
        return Jet(self.data * np.asarray(other, dtype=float))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, points={self.n_points}, components={self.n_components})"


def _order_from_count(count: int) -> int:
    r = 0
    while n_multi(r) < count:
        r += 1
    if n_multi(r) != count:
        raise ValueError(f"{count} is not a valid number of multi-indices")
    return r


def _leibniz(f: np.ndarray, g: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(f.shape, g.shape))
    for a, i, j, c in _leibniz_terms(order):
        if c == 1.0:
            out[a] += f[i] * g[j]
        else:
            out[a] += c * (f[i] * g[j])
    return out


def concatenate(jets, axis: str = "points") -> Jet:
    r = min(j.order for j in jets)
    arrays = [j.truncate(r).data for j in jets]
    return Jet(np.concatenate(arrays, axis=1 if axis == "points" else 2))
