"""Multiphase phase-field model of cells as active deformable droplets.

Each component ``phi_i`` is one cell (1 inside, 0 outside).  The
right-hand side is::

    d phi_i/dt = -v_i . grad phi_i - (dF_CH + dF_area + dF_rep)/d phi_i

with cell velocities ``v_i = F_i^int / xi`` from the tissue stress
``sigma = -P I - zeta Q``.  All global quantities (areas, deformation
tensors, interface forces) are recomputed from whatever state is passed
in, so the model can be evaluated at intermediate Runge-Kutta stages.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DomainBox, TestGrid
from .integrator import NumericalError
from .jet import Jet


@dataclass(frozen=True)
class CellParams:
    gamma: float = 0.01
    width: float = 2.5     # interface width lambda
    mu: float = 3.0
    kappa: float = 0.1
    radius: float = 8.0    # target radius R
    xi: float = 2.0
    zeta: float = 0.005
    n_cells: int = 1

    def __post_init__(self):
        if not (self.width > 0 and self.radius > 0 and self.xi > 0):
            raise ValueError("width, radius and xi must be positive")
        if self.n_cells < 1:
            raise ValueError("need at least one cell")

    @property
    def target_area(self) -> float:
        return math.pi * self.radius**2


@dataclass(frozen=True, eq=False)
class CellGlobals:
    area: np.ndarray        # (d,)  integral of phi_i^2
    S: np.ndarray           # (d, 2) (S11, S12)
    force: np.ndarray       # (d, 2)
    velocity: np.ndarray    # (d, 2)


@dataclass(frozen=True, eq=False)
class TissueFields:
    pressure: np.ndarray    # (P,)
    Q: np.ndarray           # (P, 2) (Q11, Q12)


def variation_ch(phi: Jet, params: CellParams) -> Jet:
    """Cahn-Hilliard variation; consumes two orders of ``phi``."""
    r = phi.order - 2
    if r < 0:
        raise ValueError("Cahn-Hilliard variation needs a jet of order >= 2")
    p = phi.truncate(r)
    g, lam = params.gamma, params.width
    poly = p * (1.0 - p) * (1.0 - 2.0 * p)
    return (8.0 * g / lam) * poly - (2.0 * g * lam) * phi.laplacian()


def variation_area(phi: Jet, area, params: CellParams) -> Jet:
    a0 = params.target_area
    factor = (-4.0 * params.mu / a0) * (1.0 - np.asarray(area, dtype=float) / a0)
    return phi * factor


def variation_rep(phi: Jet, params: CellParams) -> Jet:
    """``(2 kappa / lambda) phi_i sum_{k != i} phi_k^2`` for every cell ``i``."""
    sq = phi * phi
    others = Jet(sq.data.sum(axis=2, keepdims=True) - sq.data)
    return (2.0 * params.kappa / params.width) * (phi * others)


def cell_globals(state: Jet, weights: np.ndarray, params: CellParams,
                 with_fields: bool = False):
    """Areas, deformation tensors, interface forces and velocities by quadrature.

    ``state`` is the jet (order >= 2) of every cell at the quadrature points.
    """
    if state.order < 2:
        raise ValueError("cell globals need the state jet to order 2")
    w = np.asarray(weights, dtype=float)
    phi = state.value
    px, py = state[1, 0], state[0, 1]
    area = w @ (phi * phi)
    S = np.stack([w @ (0.5 * (py * py - px * px)), -(w @ (px * py))], axis=1)

    base = state.truncate(2)
    phi0 = base.truncate(0)
    pointwise = variation_rep(phi0, params).value - variation_ch(base, params).value \
        - variation_area(phi0, area, params).value
    P = pointwise.sum(axis=1)
    Q = np.stack([phi @ S[:, 0], phi @ S[:, 1]], axis=1)

    z = params.zeta
    fx = w @ (P[:, None] * px + z * (Q[:, [0]] * px + Q[:, [1]] * py))
    fy = w @ (P[:, None] * py + z * (Q[:, [1]] * px - Q[:, [0]] * py))
    force = np.stack([fx, fy], axis=1)
    g = CellGlobals(area, S, force, force / params.xi)
    for name, arr in (("area", area), ("S", S), ("force", force)):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite {name} integral")
    if with_fields:
        return g, TissueFields(P, Q)
    return g


def rhs_with_globals(state: Jet, g: CellGlobals, params: CellParams) -> Jet:
    r = state.order - 2
    if r < 0:
        raise ValueError("cell right-hand side needs a jet of order >= 2")
    phi = state.truncate(r)
    grad_x = state.derivative(1, 0).truncate(r)
    grad_y = state.derivative(0, 1).truncate(r)
    adv = grad_x * g.velocity[:, 0] + grad_y * g.velocity[:, 1]
    var = variation_ch(state, params) + variation_area(phi, g.area, params) + variation_rep(phi, params)
    return -(adv + var)


class CellModel:
    """Right-hand side of the cell system; second order in space."""

    spatial_order = 2

    def __init__(self, params: CellParams, quadrature: TestGrid):
        self.params = params
        self.quadrature = quadrature

    def globals(self, state: Jet, pts) -> CellGlobals:
        return cell_globals(state.points(pts.quad), pts.quad_weights, self.params)

    def __call__(self, state: Jet, t: float, pts) -> Jet:
        return rhs_with_globals(state, self.globals(state, pts), self.params)


def rhs(state: Jet, params: CellParams, weights: np.ndarray, quad: slice) -> Jet:
    """Right-hand side with globals integrated over rows ``quad`` of ``state``."""
    g = cell_globals(state.points(quad), weights, params)
    return rhs_with_globals(state, g, params)


# --------------------------------------------------------------------------
# initial conditions

def _displacement(points: np.ndarray, center, domain: DomainBox | None) -> np.ndarray:
    d = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    if domain is not None:
        L = domain.lengths
        d -= L * np.round(d / L)
    return d


def tanh_discs(points, centers, r: float, width: float, domain: DomainBox | None = None) -> np.ndarray:
    """``(1 + tanh((r - |x - C_i|) / width)) / 2`` per cell, shape ``(P, d)``.

    Passing ``domain`` measures distances with the minimum-image rule so the
    discs are periodic.
    """
    pts = np.atleast_2d(points)
    out = np.empty((len(pts), len(centers)))
    for i, c in enumerate(centers):
        dist = np.linalg.norm(_displacement(pts, c, domain), axis=1)
        out[:, i] = 0.5 * (1.0 + np.tanh((r - dist) / width))
    return out


def random_centers(n: int, domain: DomainBox, seed: int, min_separation: float = 0.0,
                   max_tries: int = 100_000, periodic: bool = True) -> np.ndarray:
    """Uniform cell centres, optionally rejecting pairs closer than ``min_separation``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0xCE11])))
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    centers: list[np.ndarray] = []
    tries = 0
    while len(centers) < n:
        if tries >= max_tries:
            raise RuntimeError(f"could not place {n} cells with separation {min_separation}")
        tries += 1
        c = rng.uniform(lo, hi)
        if min_separation > 0 and centers:
            d = _displacement(np.array(centers), c, domain if periodic else None)
            if np.min(np.linalg.norm(d, axis=1)) < min_separation:
                continue
        centers.append(c)
    return np.array(centers)


# --------------------------------------------------------------------------
# observables

@dataclass(frozen=True)
class Observables:
    v_rms: float
    S_rms: float
    mean_v: float
    mean_component_speed: float
    mean_component_order: float
    mean_angle: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def observables(phi: np.ndarray, g: CellGlobals, weights: np.ndarray) -> Observables:
    """Tissue-level averages from cell fields ``phi`` (P, d) on a quadrature grid.

    Tissue velocity is ``v = sum_i phi_i v_i`` and the order field is
    ``Q = sum_i phi_i S_i``; ``<.>`` is the weighted spatial mean.
    """
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    v = phi @ g.velocity
    Q = phi @ g.S
    return _averages(v, Q, w)


def _averages(v: np.ndarray, Q: np.ndarray, w: np.ndarray) -> Observables:
    speed2 = np.sum(v * v, axis=1)
    order2 = np.sum(Q * Q, axis=1)
    mv = w @ v
    mq = w @ Q
    return Observables(
        v_rms=float(np.sqrt(w @ speed2)),
        S_rms=float(np.sqrt(w @ order2)),
        mean_v=float(w @ np.sqrt(speed2)),
        mean_component_speed=float(np.hypot(*mv)),
        mean_component_order=float(np.hypot(*mq)),
        mean_angle=float(w @ np.arctan2(Q[:, 1], Q[:, 0])),
    )
