"""Manufactured-solution harness, error norms, convergence fits and a finite-difference oracle.

The manufactured fields are::

    phi_1 = sin(x) sin(y) exp(-t)
    phi_2 = cos(x) cos(y) exp(-t)

on ``(0, 2 pi)^2``.  They do not solve the cell system by themselves, so
the harness adds the source ``s = d_t phi^e - F(phi^e)``, built from the
analytic jets of ``phi^e`` and globals integrated from ``phi^e`` on the
quadrature grid.
"""
from __future__ import annotations

import csv
import functools
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .assembly import DEFAULT_RESCALE, FittedField
from .basis import Activation
from .cellmodel import CellGlobals, CellParams, cell_globals, rhs_with_globals
from .geometry import DomainBox, PoU, TestGrid, build_collocation, build_partition, build_test_grid
from .integrator import TABLEAUS, BasisConfig, TimeGrid, advance
from .jet import MAX_ORDER, Jet, multi_indices

MANUFACTURED_DOMAIN = DomainBox((0.0, 0.0), (2 * math.pi, 2 * math.pi))
MANUFACTURED_PARAMS = CellParams(gamma=0.001, width=1.0, mu=0.001, kappa=0.001,
                                 radius=1.0, xi=1.0, zeta=1.0, n_cells=2)


def _trig_derivatives(u: np.ndarray, order: int) -> tuple[list, list]:
    """``d^k sin`` and ``d^k cos`` for ``k <= order``, by exact quadrant shifts."""
    s, c = np.sin(u), np.cos(u)
    cycle_sin = (s, c, -s, -c)
    cycle_cos = (c, -s, -c, s)
    return [cycle_sin[k % 4] for k in range(order + 1)], [cycle_cos[k % 4] for k in range(order + 1)]


def exact_solution(points, t: float, order: int = 0) -> Jet:
    """Jet of the two manufactured fields at ``points`` (P, 2) and time ``t``."""
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order {order} not in [0, {MAX_ORDER}]")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    decay = math.exp(-t)
    midx = multi_indices(order)
    data = np.empty((len(midx), len(pts), 2))
    sx, cx = _trig_derivatives(x, order)
    sy, cy = _trig_derivatives(y, order)
    for a, (ax, ay) in enumerate(midx):
        data[a, :, 0] = sx[ax] * sy[ay] * decay
        data[a, :, 1] = cx[ax] * cy[ay] * decay
    return Jet(data)


def exact_values(points, t: float) -> np.ndarray:
    return exact_solution(points, t, 0).value


def exact_time_derivative(points, t: float, order: int = 0) -> Jet:
    return -exact_solution(points, t, order)


@dataclass
class ManufacturedCase:
    """Cell model plus the source that makes ``exact_solution`` an exact solution."""

    params: CellParams = MANUFACTURED_PARAMS
    quadrature: TestGrid = field(default_factory=lambda: build_test_grid(
        MANUFACTURED_DOMAIN, 200, 200, centered=True))

    def exact_globals(self, t: float) -> CellGlobals:
        state = exact_solution(self.quadrature.points, t, 2)
        return cell_globals(state, self.quadrature.weights, self.params)

    def source_jet(self, points, t: float, order: int = 0,
                   globals_: CellGlobals | None = None) -> Jet:
        g = self.exact_globals(t) if globals_ is None else globals_
        F = rhs_with_globals(exact_solution(points, t, order + 2), g, self.params)
        return exact_time_derivative(points, t, order) - F

    def source(self, points, t: float) -> np.ndarray:
        return self.source_jet(points, t, 0).value


def manufactured_source(points, t: float, case: ManufacturedCase | None = None) -> np.ndarray:
    """``s = d_t phi^e - F(phi^e)`` at ``points``, shape (P, 2)."""
    return (case or ManufacturedCase()).source(points, t)


class ManufacturedModel:
    """Cell right-hand side with the manufactured source added."""

    spatial_order = 2

    def __init__(self, case: ManufacturedCase):
        self.case = case
        self.quadrature = case.quadrature
        self._cache: tuple[float, CellGlobals] | None = None

    def _globals(self, t: float) -> CellGlobals:
        if self._cache is None or self._cache[0] != t:
            self._cache = (t, self.case.exact_globals(t))
        return self._cache[1]

    def __call__(self, state: Jet, t: float, pts) -> Jet:
        params = self.case.params
        g = cell_globals(state.points(pts.quad), pts.quad_weights, params)
        r = state.order - 2
        src = self.case.source_jet(pts.points, t, r, self._globals(t))
        return rhs_with_globals(state, g, params) + src


# --------------------------------------------------------------------------
# error norms

@dataclass(frozen=True)
class ErrorReport:
    l_inf: float
    l_2: float
    seconds: float = 0.0


def relative_errors(approx: np.ndarray, exact: np.ndarray, seconds: float = 0.0) -> ErrorReport:
    """Relative discrete max and l2 errors over every point and component."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if approx.shape != exact.shape:
        raise ValueError(f"shape mismatch {approx.shape} vs {exact.shape}")
    e_inf = np.max(np.abs(exact))
    if e_inf == 0.0:
        raise ValueError("exact field vanishes on the test grid")
    diff = approx - exact
    return ErrorReport(float(np.max(np.abs(diff)) / e_inf),
                       float(np.linalg.norm(diff) / np.linalg.norm(exact)), float(seconds))


def field_errors(fitted: FittedField, exact: Callable[[np.ndarray, float], np.ndarray],
                 grid: TestGrid, seconds: float = 0.0) -> ErrorReport:
    approx = fitted.jet(grid.points, 0).value
    return relative_errors(approx, exact(grid.points, fitted.t), seconds)


# --------------------------------------------------------------------------
# manufactured runs

@dataclass(frozen=True)
class ManufacturedConfig:
    activation: str = "tanh"
    nx: int = 3
    ny: int = 3
    n_features: int = 200
    q: int = 20
    q_test: int = 40
    dt: float = 5e-2
    T: float = 1.0
    r_max: float = 1.7
    c: float = DEFAULT_RESCALE
    seed: int = 0
    tableau: str = "heun"
    quad: int = 200
    method: str = "blocked"
    regenerate: bool = True
    lower: tuple[float, float] = (0.0, 0.0)
    upper: tuple[float, float] = (2 * math.pi, 2 * math.pi)


CONFIG_COLUMNS = ("activation", "nx", "ny", "n_features", "q", "q_test", "dt", "T", "r_max", "c", "seed")


def run_manufactured(cfg: ManufacturedConfig) -> ErrorReport:
    """March the manufactured problem to ``T`` with Dirichlet data from the exact fields."""
    domain = DomainBox(cfg.lower, cfg.upper)
    part = build_partition(domain, cfg.nx, cfg.ny, PoU.INDICATOR)
    coll = build_collocation(part, cfg.q, cfg.q)
    quad = build_test_grid(domain, cfg.quad, cfg.quad, centered=True)
    model = ManufacturedModel(ManufacturedCase(MANUFACTURED_PARAMS, quad))
    basis = BasisConfig(cfg.n_features, cfg.r_max, Activation(cfg.activation), cfg.seed,
                        regenerate=cfg.regenerate)
    grid = TimeGrid.from_dt(cfg.T, cfg.dt)
    t0 = time.perf_counter()
    final = advance(model, lambda p: exact_values(p, 0.0), coll, basis, exact_values,
                    TABLEAUS[cfg.tableau], grid, c=cfg.c, method=cfg.method, keep="last")[-1]
    seconds = time.perf_counter() - t0
    test = build_test_grid(domain, cfg.q_test, cfg.q_test)
    return field_errors(final, exact_values, test, seconds)


# --------------------------------------------------------------------------
# convergence studies

def fit_slope(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Least-squares slope of ``log y`` against ``log x``; ``None`` when undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    lx, ly = np.log(x[ok]), np.log(y[ok])
    if len(lx) < 2 or np.ptp(lx) == 0.0:
        return None
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass
class StudyRow:
    value: float
    report: ErrorReport | None
    config: object = None
    error: str = ""


@dataclass
class ConvergenceStudy:
    knob: str
    rows: list[StudyRow]
    slope: float | None

    def to_csv(self, columns: Sequence[str] = CONFIG_COLUMNS) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(columns) + ["l_inf", "l_2", "seconds", "status"])
        for row in self.rows:
            cfg = [getattr(row.config, c, "") for c in columns]
            if row.report is None:
                w.writerow(cfg + ["", "", "", row.error or "failed"])
            else:
                r = row.report
                w.writerow(cfg + [repr(r.l_inf), repr(r.l_2), f"{r.seconds:.3f}", "ok"])
        return buf.getvalue()


def _set_knob(cfg, knob: str, value):
    return replace(cfg, **{knob: value})


def _guarded(run: Callable, cfg):
    try:
        return run(cfg), ""
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def convergence_study(base, knob: str, values: Iterable, run: Callable = run_manufactured,
                      pool_map: Callable = map, apply: Callable = _set_knob) -> ConvergenceStudy:
    """Run ``run(apply(base, knob, v))`` for every value and fit the log-log slope of l_2.

    A failing row is recorded with its error message and the sweep continues.
    ``pool_map`` may be a parallel ``map`` (``run`` must then be picklable).
    """
    values = list(values)
    if not values:
        raise ValueError("empty sweep")
    configs = [apply(base, knob, v) for v in values]
    results = pool_map(functools.partial(_guarded, run), configs)
    rows = [StudyRow(float(v), rep, cfg, err)
            for v, cfg, (rep, err) in zip(values, configs, results)]
    good = [r for r in rows if r.report is not None]
    slope = fit_slope([r.value for r in good], [r.report.l_2 for r in good])
    return ConvergenceStudy(knob, rows, slope)


# --------------------------------------------------------------------------
# finite-difference oracle

_STENCILS = {
    0: ((0, 1.0),),
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}


def fd_oracle(f: Callable, point, midx, step: float, dps: int | None = None) -> float:
    """Second-order central difference of ``f`` for ``midx = (ax, ay)``.

    One-axis stencils are composed as a tensor product.  With ``dps`` the
    stencil is summed in ``mpmath`` at that precision; ``f`` then receives
    ``mpf`` coordinates and must return something ``mpmath`` can convert.
    Without it everything is plain float arithmetic.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    ax, ay = int(midx[0]), int(midx[1])
    if ax not in _STENCILS or ay not in _STENCILS:
        raise ValueError(f"no stencil for multi-index {midx}")
    if dps is None:
        x0, y0 = float(point[0]), float(point[1])
        total = 0.0
        for i, ci in _STENCILS[ax]:
            for j, cj in _STENCILS[ay]:
                total += ci * cj * float(f(x0 + i * step, y0 + j * step))
        return total / step ** (ax + ay)
    import mpmath

    with mpmath.workdps(dps):
        x0, y0, h = mpmath.mpf(point[0]), mpmath.mpf(point[1]), mpmath.mpf(step)
        total = mpmath.mpf(0)
        for i, ci in _STENCILS[ax]:
            for j, cj in _STENCILS[ay]:
                total += mpmath.mpf(ci) * mpmath.mpf(cj) * mpmath.mpf(f(x0 + i * h, y0 + j * h))
        return float(total / h ** (ax + ay))
