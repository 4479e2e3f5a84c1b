"""Explicit Runge-Kutta stepping of random-feature fields.

Each step evaluates the Runge-Kutta update pointwise at the collocation
points and re-fits it with a freshly sampled basis.  Stage increments are
carried as jets: with a spatial operator of order ``m`` and ``s`` stages,
stage ``i`` needs its state to order ``m (s - i + 1)``, so the starting
field is differentiated to order ``m s``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
import scipy.linalg

from .assembly import (DEFAULT_RESCALE, DEFAULT_RTOL, DirichletSampled, FittedField, Periodic,
                       SolverError, apply_rescaling, assemble_system, fit_field,
                       sample_dirichlet)
from .basis import Activation, FeatureBasis, sample_basis
from .geometry import CollocationSet, Partition, TestGrid
from .jet import MAX_ORDER, Jet, concatenate

log = logging.getLogger(__name__)


class NumericalError(FloatingPointError):
    """Non-finite values during stage evaluation or fitting."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class RKTableau:
    a: tuple[tuple[float, ...], ...]
    b: tuple[float, ...]
    c: tuple[float, ...]
    name: str = "custom"

    def __post_init__(self):
        s = len(self.b)
        if len(self.c) != s or len(self.a) != s:
            raise ValueError("tableau arrays disagree on the number of stages")
        for i, row in enumerate(self.a):
            if len(row) != s or any(row[j] != 0.0 for j in range(i, s)):
                raise ValueError("tableau must be strictly lower triangular (explicit)")
        if abs(sum(self.b) - 1.0) > 1e-14:
            raise ValueError("tableau weights must sum to one")

    @property
    def stages(self) -> int:
        return len(self.b)


HEUN = RKTableau(((0.0, 0.0), (1.0, 0.0)), (0.5, 0.5), (0.0, 1.0), "heun")
MIDPOINT = RKTableau(((0.0, 0.0), (0.5, 0.0)), (0.0, 1.0), (0.0, 0.5), "midpoint")
EULER = RKTableau(((0.0,),), (1.0,), (0.0,), "euler")
RK4 = RKTableau(((0.0, 0.0, 0.0, 0.0), (0.5, 0.0, 0.0, 0.0), (0.0, 0.5, 0.0, 0.0), (0.0, 0.0, 1.0, 0.0)),
                (1 / 6, 1 / 3, 1 / 3, 1 / 6), (0.0, 0.5, 0.5, 1.0), "rk4")
TABLEAUS = {t.name: t for t in (HEUN, MIDPOINT, EULER, RK4)}


@dataclass(frozen=True)
class TimeGrid:
    T: float
    K: int

    def __post_init__(self):
        if self.K < 0 or (self.K > 0 and not self.T > 0):
            raise ValueError("need K >= 0 steps and T > 0")

    @classmethod
    def from_dt(cls, T: float, dt: float) -> "TimeGrid":
        K = int(round(T / dt))
        if K < 1 or abs(K * dt - T) > 1e-9 * T:
            raise ValueError(f"dt={dt} does not divide T={T}")
        return cls(T, K)

    @property
    def dt(self) -> float:
        return self.T / self.K if self.K else 0.0

    def time(self, k: int) -> float:
        return self.T if k == self.K else k * self.dt


@dataclass(frozen=True, eq=False)
class StagePoints:
    """Collocation rows followed by the model's quadrature rows."""

    points: np.ndarray
    n_colloc: int
    quad_weights: np.ndarray | None = None

    @property
    def quad(self) -> slice:
        return slice(self.n_colloc, None)


class RHSModel(Protocol):
    """Right-hand side ``F`` of ``d phi/dt = F(x, t, phi)``.

    ``spatial_order`` is the highest spatial derivative ``F`` applies; given
    a state jet of order ``r + m`` it returns a jet of order ``r``.  A model
    that needs global integrals exposes a ``quadrature`` grid; those rows
    are appended to the stage points.
    """

    spatial_order: int
    quadrature: TestGrid | None

    def __call__(self, state: Jet, t: float, pts: StagePoints) -> Jet: ...


def stage_points(coll: CollocationSet, model) -> StagePoints:
    quad = getattr(model, "quadrature", None)
    cp = coll.flat_points
    if quad is None:
        return StagePoints(cp, len(cp))
    return StagePoints(np.concatenate([cp, quad.points]), len(cp), quad.weights)


def _state_jet(field_: FittedField, coll: CollocationSet, model, order: int) -> Jet:
    colloc = field_.jet(coll, order)
    quad = getattr(model, "quadrature", None)
    if quad is None:
        return colloc
    return concatenate([colloc, field_.jet(quad.points, order)])


def required_order(model, tableau: RKTableau) -> int:
    return model.spatial_order * tableau.stages


def rk_target(model, field_: FittedField, tableau: RKTableau, t: float, dt: float,
              coll: CollocationSet, return_jet: bool = False):
    """Runge-Kutta update of ``field_`` at the collocation points, ``(M*Q, d)``."""
    m, s = model.spatial_order, tableau.stages
    need = m * s
    if need > MAX_ORDER:
        raise ValueError(f"{s}-stage scheme on an order-{m} operator needs derivatives to "
                         f"order {need}; the basis supports {MAX_ORDER}")
    pts = stage_points(coll, model)
    phi = _state_jet(field_, coll, model, need)
    out = _rk_combine(lambda state, tau: model(state, tau, pts), phi, tableau, t, dt, m, pts.points)
    if return_jet:
        return out
    return out[: pts.n_colloc]


def _rk_combine(F, phi: Jet, tableau: RKTableau, t: float, dt: float, m: int, points=None) -> np.ndarray:
    """``phi + dt sum_i b_i D_i`` with stage ``i`` evaluated at jet order ``m (s - i)``."""
    s = tableau.stages
    incs: list[Jet] = []
    for i in range(s):
        state = phi.truncate(m * (s - i))
        for j in range(i):
            if tableau.a[i][j] != 0.0:
                state = state + (dt * tableau.a[i][j]) * incs[j]
        D = F(state, t + tableau.c[i] * dt)
        bad = ~np.isfinite(D.data)
        if bad.any():
            _, q, comp = np.unravel_index(np.argmax(bad), D.data.shape)
            where = f"point {points[q]}" if points is not None else f"row {q}"
            raise NumericalError(f"non-finite value in stage {i + 1} at {where} component {comp}")
        incs.append(D)
    acc = None
    for i in range(s):
        if tableau.b[i] != 0.0:
            term = tableau.b[i] * incs[i].value
            acc = term if acc is None else acc + term
    return phi.value + dt * acc


def ode_step(f: Callable[[np.ndarray, float], np.ndarray], y, t: float, dt: float,
             tableau: RKTableau = HEUN) -> np.ndarray:
    """One step for ``y' = f(y, t)``: the spatially constant case of :func:`rk_target`."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    phi = Jet(y.reshape(1, 1, -1))
    return _rk_combine(lambda state, tau: Jet(np.asarray(f(state.value[0], tau), dtype=float).reshape(1, 1, -1)),
                       phi, tableau, t, dt, 0)[0]


def ode_solve(f, y0, grid: "TimeGrid", tableau: RKTableau = HEUN) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    for k in range(grid.K):
        y = ode_step(f, y, grid.time(k), grid.dt, tableau)
    return y


@dataclass
class BasisConfig:
    n_features: int
    r_max: float
    activation: Activation | str = Activation.TANH
    seed: int = 0
    regenerate: bool = True
    per_component: bool = False

    def sample(self, partition: Partition, step: int, n_components: int) -> tuple[FeatureBasis, ...]:
        step = step if self.regenerate else 0
        if self.per_component:
            return tuple(sample_basis(partition, self.n_features, self.r_max, self.activation,
                                      self.seed, step, i) for i in range(n_components))
        return (sample_basis(partition, self.n_features, self.r_max, self.activation, self.seed, step),)


@dataclass
class StepInfo:
    step: int
    t: float
    field: FittedField
    residual: float
    seconds: float


Sink = Callable[[StepInfo], None]


def _boundary(bc, coll: CollocationSet, t: float):
    """Periodic stays as is; a callable ``g(points, t)`` is sampled at ``t``."""
    if bc is None or isinstance(bc, (Periodic, DirichletSampled)):
        return bc
    return sample_dirichlet(coll, bc, t)


class _FrozenSolver:
    """Pseudo-inverse of a fixed rescaled matrix; only the right-hand side changes."""

    def __init__(self, basis, coll, bc, d, c, rtol):
        probe = np.zeros((coll.partition.n_subdomains * coll.n_points, d))
        if isinstance(bc, DirichletSampled):
            bc = DirichletSampled(np.zeros_like(bc.values_x), np.zeros_like(bc.values_y))
        system = apply_rescaling(assemble_system(basis, coll, probe, bc), c)
        self.basis = basis
        self.scales = system.scales
        self.matrix = system.matrix
        self.pinv = scipy.linalg.pinv(system.matrix, rtol=rtol)

    def solve(self, targets: np.ndarray, bc) -> tuple[np.ndarray, float]:
        parts = [targets]
        if isinstance(bc, DirichletSampled):
            parts += [bc.values_x, bc.values_y]
        rhs = np.concatenate(parts)
        rhs = np.concatenate([rhs, np.zeros((self.matrix.shape[0] - rhs.shape[0], rhs.shape[1]))])
        rhs *= self.scales[:, None]
        U = self.pinv @ rhs
        denom = np.linalg.norm(rhs)
        res = np.linalg.norm(self.matrix @ U - rhs)
        return U, float(res / denom) if denom > 0 else float(res)


def advance(model, initial: Callable[[np.ndarray], np.ndarray], coll: CollocationSet,
            basis_config: BasisConfig, bc, tableau: RKTableau, grid: TimeGrid,
            sinks: Sequence[Sink] = (), c: float = DEFAULT_RESCALE, method: str = "blocked",
            rtol: float = DEFAULT_RTOL, keep: str = "all") -> list[FittedField]:
    """Fit ``initial`` at t=0 and march ``grid.K`` Runge-Kutta steps.

    ``bc`` is ``Periodic()``, ``None`` or ``g(points, t)`` for Dirichlet
    data.  ``keep="last"`` returns only the final field.
    """
    if model.spatial_order * tableau.stages > MAX_ORDER:
        raise ValueError(f"scheme needs derivatives to order {model.spatial_order * tableau.stages}, "
                         f"basis supports {MAX_ORDER}")
    part = coll.partition
    h = np.atleast_2d(np.asarray(initial(coll.flat_points), dtype=float))
    if h.shape[0] != coll.flat_points.shape[0]:
        h = h.T
    d = h.shape[1]
    frozen = None
    if not basis_config.regenerate and not basis_config.per_component:
        basis0 = basis_config.sample(part, 0, d)[0]
        frozen = _FrozenSolver(basis0, coll, _boundary(bc, coll, 0.0), d, c, rtol)

    def fit(step: int, targets: np.ndarray, t: float) -> tuple[FittedField, float]:
        bcs = _boundary(bc, coll, t)
        if frozen is not None:
            U, res = frozen.solve(targets, bcs)
            return FittedField(part, (frozen.basis,), U, t), res
        bases = basis_config.sample(part, step, d)
        return fit_field(bases, coll, targets, bcs, c, method, rtol, t)

    fields: list[FittedField] = []
    t0 = time.perf_counter()
    current, res = fit(0, h, 0.0)
    _emit(sinks, StepInfo(0, 0.0, current, res, time.perf_counter() - t0), fields, keep)
    for k in range(grid.K):
        t_start = time.perf_counter()
        t, t_next = grid.time(k), grid.time(k + 1)
        try:
            target = rk_target(model, current, tableau, t, grid.dt, coll)
        except NumericalError as exc:
            raise NumericalError(str(exc), k + 1) from exc
        try:
            current, res = fit(k + 1, target, t_next)
        except SolverError as exc:
            raise SolverError(f"step {k + 1}: {exc}") from exc
        if not np.all(np.isfinite(current.coefficients)):
            raise NumericalError("non-finite coefficients", k + 1)
        _emit(sinks, StepInfo(k + 1, t_next, current, res, time.perf_counter() - t_start), fields, keep)
    if keep == "last":
        return [current]
    return fields


def _emit(sinks, info: StepInfo, fields: list, keep: str) -> None:
    if keep == "all":
        fields.append(info.field)
    log.debug("step %d t=%.6g residual=%.3e %.3fs", info.step, info.t, info.residual, info.seconds)
    for sink in sinks:
        sink(info)
