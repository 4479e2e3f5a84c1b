"""Domain partition, partition-of-unity weights and point sets.

Subdomains are numbered ``n = ix * ny + iy`` so that the x-neighbour of
``n`` is ``n + ny`` and the y-neighbour is ``n + 1``.  Points inside a
subdomain grid are ordered y-major: ``q = jy * qx + jx``.
"""
from __future__ import annotations

import enum
from functools import cached_property
from dataclasses import dataclass, field

import numpy as np

LEFT, RIGHT, BOTTOM, TOP = "left", "right", "bottom", "top"
SIDES = (LEFT, RIGHT, BOTTOM, TOP)

# point roles inside a collocation grid
INTERIOR, BOUNDARY, INTERFACE = 0, 1, 2


class PoU(enum.Enum):
    INDICATOR = "indicator"
    SINBLEND = "sinblend"


@dataclass(frozen=True)
class DomainBox:
    lower: tuple[float, float]
    upper: tuple[float, float]

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (2,) or hi.shape != (2,):
            raise ValueError("domain corners must be length-2 vectors")
        if not np.all(hi > lo):
            raise ValueError(f"degenerate domain {self.lower} -> {self.upper}")
        object.__setattr__(self, "lower", (float(lo[0]), float(lo[1])))
        object.__setattr__(self, "upper", (float(hi[0]), float(hi[1])))

    @property
    def lengths(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def area(self) -> float:
        lx, ly = self.lengths
        return float(lx * ly)

    def contains(self, points, atol: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(points)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.all((p >= lo - atol) & (p <= hi + atol), axis=-1)


@dataclass(frozen=True, eq=False)
class Partition:
    """Uniform ``nx`` by ``ny`` tiling of a :class:`DomainBox`."""

    domain: DomainBox
    nx: int
    ny: int
    pou: PoU = PoU.INDICATOR
    x_edges: np.ndarray = field(repr=False, default=None)
    y_edges: np.ndarray = field(repr=False, default=None)

    @property
    def n_subdomains(self) -> int:
        return self.nx * self.ny

    def index(self, ix: int, iy: int) -> int:
        return ix * self.ny + iy

    def cell(self, n: int) -> tuple[int, int]:
        if not 0 <= n < self.n_subdomains:
            raise IndexError(f"subdomain {n} out of range")
        return divmod(n, self.ny)

    def bounds(self, n: int) -> tuple[float, float, float, float]:
        """(left, right, bottom, top) of subdomain ``n``."""
        ix, iy = self.cell(n)
        return (self.x_edges[ix], self.x_edges[ix + 1],
                self.y_edges[iy], self.y_edges[iy + 1])

    @cached_property
    def centers(self) -> np.ndarray:
        xc = 0.5 * (self.x_edges[:-1] + self.x_edges[1:])
        yc = 0.5 * (self.y_edges[:-1] + self.y_edges[1:])
        return np.array([(xc[ix], yc[iy]) for ix in range(self.nx) for iy in range(self.ny)])

    @cached_property
    def radii(self) -> np.ndarray:
        rx = 0.5 * np.diff(self.x_edges)
        ry = 0.5 * np.diff(self.y_edges)
        return np.array([(rx[ix], ry[iy]) for ix in range(self.nx) for iy in range(self.ny)])

    def neighbor(self, n: int, side: str) -> int:
        """Index of the subdomain across ``side``, or -1 on the domain boundary."""
        ix, iy = self.cell(n)
        if side == LEFT:
            return self.index(ix - 1, iy) if ix > 0 else -1
        if side == RIGHT:
            return self.index(ix + 1, iy) if ix < self.nx - 1 else -1
        if side == BOTTOM:
            return self.index(ix, iy - 1) if iy > 0 else -1
        if side == TOP:
            return self.index(ix, iy + 1) if iy < self.ny - 1 else -1
        raise ValueError(f"unknown side {side!r}")

    def locate(self, points, strict: bool = True) -> np.ndarray:
        """Owning subdomain of each point under the half-open rule.

        Subdomains own ``[left, right) x [bottom, top)``; those touching the
        upper/right domain boundary also own that closed edge.  Points
        outside the closed domain raise (``strict``) or map to -1.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        ix = np.searchsorted(self.x_edges, p[:, 0], side="right") - 1
        iy = np.searchsorted(self.y_edges, p[:, 1], side="right") - 1
        ix = np.where(p[:, 0] == self.x_edges[-1], self.nx - 1, ix)
        iy = np.where(p[:, 1] == self.y_edges[-1], self.ny - 1, iy)
        outside = (ix < 0) | (ix >= self.nx) | (iy < 0) | (iy >= self.ny)
        if strict and outside.any():
            bad = p[np.argmax(outside)]
            raise ValueError(f"point {tuple(bad)} lies outside the domain")
        owner = ix * self.ny + iy
        return np.where(outside, -1, owner)


def build_partition(domain: DomainBox, nx: int, ny: int, pou: PoU | str = PoU.INDICATOR) -> Partition:
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"subdomain counts must be positive integers, got {nx}x{ny}")
    pou = PoU(pou)
    x_edges = np.linspace(domain.lower[0], domain.upper[0], int(nx) + 1)
    y_edges = np.linspace(domain.lower[1], domain.upper[1], int(ny) + 1)
    return Partition(domain, int(nx), int(ny), pou, x_edges, y_edges)


def normalize(points, partition: Partition, n: int) -> np.ndarray:
    """Affine map of subdomain ``n`` onto ``[-1, 1]^2``."""
    r = partition.radii[n]
    if np.any(r == 0):
        raise ZeroDivisionError(f"subdomain {n} has zero radius")
    return (np.asarray(points, dtype=float) - partition.centers[n]) / r


def _sinblend_1d(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    lo = (s >= -1.25) & (s < -0.75)
    mid = (s >= -0.75) & (s <= 0.75)
    hi = (s > 0.75) & (s <= 1.25)
    out[lo] = 0.5 * (1.0 + np.sin(2 * np.pi * s[lo]))
    out[mid] = 1.0
    out[hi] = 0.5 * (1.0 - np.sin(2 * np.pi * s[hi]))
    return out


def pou_value(partition: Partition, n: int, points) -> np.ndarray | float:
    """Partition-of-unity weight of subdomain ``n`` at ``points``."""
    partition.cell(n)
    p = np.asarray(points, dtype=float)
    scalar = p.ndim == 1
    p = np.atleast_2d(p)
    if partition.pou is PoU.INDICATOR:
        w = (partition.locate(p, strict=False) == n).astype(float)
    else:
        s = normalize(p, partition, n)
        w = _sinblend_1d(s[:, 0]) * _sinblend_1d(s[:, 1])
    return float(w[0]) if scalar else w


@dataclass(frozen=True, eq=False)
class CollocationSet:
    """Per-subdomain tensor grids including the subdomain edges.

    ``points`` has shape ``(M, Q, 2)``; ``weights`` are trapezoidal area
    weights, so shared edge points are split between neighbours.
    """

    partition: Partition
    qx: int
    qy: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    roles: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.qx * self.qy

    @property
    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, 2)

    def edge(self, side: str) -> np.ndarray:
        """Local indices of the grid points on ``side``, ordered along the edge."""
        jx = np.arange(self.qx)
        jy = np.arange(self.qy)
        if side == LEFT:
            return jy * self.qx
        if side == RIGHT:
            return jy * self.qx + self.qx - 1
        if side == BOTTOM:
            return jx
        if side == TOP:
            return (self.qy - 1) * self.qx + jx
        raise ValueError(f"unknown side {side!r}")

    def edge_points(self, n: int, side: str) -> np.ndarray:
        return self.points[n, self.edge(side)]

    def interface_pairs(self):
        """Shared edges, each listed once and owned by the lower index.

        Yields ``(axis, n, m, idx_n, idx_m)`` where rows of subdomain ``n``
        at local indices ``idx_n`` coincide with rows of ``m`` at ``idx_m``.
        """
        part = self.partition
        for n in range(part.n_subdomains):
            m = part.neighbor(n, RIGHT)
            if m >= 0:
                yield "x", n, m, self.edge(RIGHT), self.edge(LEFT)
        for n in range(part.n_subdomains):
            m = part.neighbor(n, TOP)
            if m >= 0:
                yield "y", n, m, self.edge(TOP), self.edge(BOTTOM)


def _trapezoid(count: int, length: float) -> np.ndarray:
    w = np.full(count, length / (count - 1))
    w[[0, -1]] *= 0.5
    return w


def build_collocation(partition: Partition, qx: int, qy: int) -> CollocationSet:
    if qx < 2 or qy < 2:
        raise ValueError(f"collocation grid needs at least 2x2 points, got {qx}x{qy}")
    M = partition.n_subdomains
    pts = np.empty((M, qx * qy, 2))
    wts = np.empty((M, qx * qy))
    roles = np.full((M, qx * qy), INTERIOR, dtype=np.int8)
    for n in range(M):
        left, right, bottom, top = partition.bounds(n)
        xs = np.linspace(left, right, qx)
        ys = np.linspace(bottom, top, qy)
        X, Y = np.meshgrid(xs, ys)
        pts[n, :, 0] = X.ravel()
        pts[n, :, 1] = Y.ravel()
        wts[n] = np.outer(_trapezoid(qy, top - bottom), _trapezoid(qx, right - left)).ravel()
    coll = CollocationSet(partition, qx, qy, pts, wts, roles)
    for n in range(M):
        # interface first so that boundary wins at mixed corners
        for side in SIDES:
            if partition.neighbor(n, side) >= 0:
                roles[n, coll.edge(side)] = INTERFACE
        for side in SIDES:
            if partition.neighbor(n, side) < 0:
                roles[n, coll.edge(side)] = BOUNDARY
    return coll


@dataclass(frozen=True, eq=False)
class TestGrid:
    """Uniform grid over the whole domain with equal (midpoint) weights.

    ``centered=False`` places nodes on the closed domain including its edges
    (used for error norms); ``centered=True`` puts them at cell centres,
    which is the midpoint rule and is what global integrals use.
    """

    __test__ = False  # not a pytest class

    domain: DomainBox
    nx: int
    ny: int
    centered: bool
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols) = (ny, nx) of the point raster."""
        return self.ny, self.nx

    def __len__(self) -> int:
        return self.nx * self.ny


def build_test_grid(domain: DomainBox, nx: int, ny: int, centered: bool = False) -> TestGrid:
    if nx < 2 or ny < 2:
        raise ValueError(f"test grid needs at least 2x2 points, got {nx}x{ny}")
    (x0, y0), (x1, y1) = domain.lower, domain.upper
    if centered:
        hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
        xs = x0 + hx * (np.arange(nx) + 0.5)
        ys = y0 + hy * (np.arange(ny) + 0.5)
    else:
        xs = np.linspace(x0, x1, nx)
        ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    wts = np.full(nx * ny, domain.area / (nx * ny))
    return TestGrid(domain, nx, ny, centered, pts, wts)
