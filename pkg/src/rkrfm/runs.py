"""Config-driven runs: static fits, convergence sweeps, cell simulations, observable sweeps."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import snapshot
from .assembly import Periodic, fit_field, sample_dirichlet
from .basis import Activation
from .cellmodel import (CellGlobals, CellModel, CellParams, Observables, cell_globals,
                        observables, random_centers, tanh_discs)
from .config import ConfigError, RunConfig
from .geometry import DomainBox, PoU, build_collocation, build_partition, build_test_grid
from .integrator import TABLEAUS, BasisConfig, StepInfo, TimeGrid, advance
from .verify import (ConvergenceStudy, ManufacturedConfig, convergence_study, exact_values,
                     relative_errors)

log = logging.getLogger(__name__)

CONVERGE_KNOBS = ("dt", "n_features", "subdomains", "q", "q_test", "r_max", "c", "seed")


@contextmanager
def worker_map(workers: int):
    """``map`` over a process pool of ``workers`` processes, or the builtin for one."""
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool.map


# --------------------------------------------------------------------------
# manufactured problem

def manufactured_config(cfg: RunConfig) -> ManufacturedConfig:
    if cfg.collocation.qx != cfg.collocation.qy:
        raise ConfigError("manufactured runs use square collocation grids (qx == qy)")
    return ManufacturedConfig(
        activation=cfg.basis.activation, nx=cfg.partition.nx, ny=cfg.partition.ny,
        n_features=cfg.basis.n_features, q=cfg.collocation.qx, q_test=cfg.collocation.q_test,
        dt=cfg.time.dt, T=cfg.time.T, r_max=cfg.basis.r_max, c=cfg.solver.rescale,
        seed=cfg.basis.seed, tableau=cfg.time.tableau, quad=cfg.collocation.quad,
        method=cfg.solver.method, regenerate=cfg.basis.regenerate,
        lower=cfg.domain.lower, upper=cfg.domain.upper)


def apply_knob(mcfg: ManufacturedConfig, knob: str, value) -> ManufacturedConfig:
    if knob == "subdomains":
        return dataclasses.replace(mcfg, nx=int(value), ny=int(value))
    if knob in ("n_features", "q", "q_test", "seed"):
        return dataclasses.replace(mcfg, **{knob: int(value)})
    if knob in ("dt", "r_max", "c"):
        return dataclasses.replace(mcfg, **{knob: float(value)})
    raise ConfigError(f"unknown sweep knob {knob!r}; choose from {', '.join(CONVERGE_KNOBS)}")


def run_converge(cfg: RunConfig, out: Path | None = None, knob: str | None = None,
                 values=None, workers: int = 1) -> ConvergenceStudy:
    """Convergence table over one knob; writes ``converge.csv`` when ``out`` is given."""
    knob = knob or cfg.sweep.knob
    values = list(values if values is not None else cfg.sweep.values)
    if knob not in CONVERGE_KNOBS:
        raise ConfigError(f"unknown sweep knob {knob!r}; choose from {', '.join(CONVERGE_KNOBS)}")
    if not values:
        raise ConfigError("sweep.values is empty")
    base = manufactured_config(cfg)
    with worker_map(workers) as pmap:
        study = convergence_study(base, knob, values, pool_map=pmap, apply=apply_knob)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "converge.csv").write_text(study.to_csv())
    return study


# --------------------------------------------------------------------------
# cell simulations

def cell_params(cfg: RunConfig) -> CellParams:
    c = cfg.cells
    return CellParams(gamma=c.gamma, width=c.width, mu=c.mu, kappa=c.kappa, radius=c.radius,
                      xi=c.xi, zeta=c.zeta, n_cells=c.n_cells)


def cell_centers(cfg: RunConfig, domain: DomainBox) -> np.ndarray:
    if cfg.cells.centers:
        return np.array(cfg.cells.centers, dtype=float)
    return random_centers(cfg.cells.n_cells, domain, cfg.basis.seed, cfg.cells.min_separation)


@dataclass
class CellRunResult:
    final: Observables
    area: np.ndarray
    field_min: float
    field_max: float
    steps: int
    seconds: float
    series: list[dict] = field(default_factory=list)


def _domain(cfg: RunConfig) -> DomainBox:
    return DomainBox(cfg.domain.lower, cfg.domain.upper)


def simulate_cells(cfg: RunConfig, out: Path | None = None) -> CellRunResult:
    """Periodic cell simulation; snapshots every ``output.stride`` steps when ``out`` is given.

    Snapshot values live on the centred ``q_test`` grid and globals are
    integrated on the centred ``quad`` grid.  Files contain no timings, so
    repeated runs with the same seed produce identical bytes.
    """
    domain = _domain(cfg)
    part = build_partition(domain, cfg.partition.nx, cfg.partition.ny, PoU(cfg.partition.pou))
    coll = build_collocation(part, cfg.collocation.qx, cfg.collocation.qy)
    quad = build_test_grid(domain, cfg.collocation.quad, cfg.collocation.quad, centered=True)
    snap_grid = build_test_grid(domain, cfg.collocation.q_test, cfg.collocation.q_test, centered=True)
    params = cell_params(cfg)
    centers = cell_centers(cfg, domain)
    model = CellModel(params, quad)
    basis = BasisConfig(cfg.basis.n_features, cfg.basis.r_max, Activation(cfg.basis.activation),
                        cfg.basis.seed, cfg.basis.regenerate, cfg.basis.per_component)
    grid = TimeGrid(cfg.time.T, cfg.time.K)
    stride = cfg.output.stride
    state = {"min": np.inf, "max": -np.inf, "final": None, "area": None}
    series: list[dict] = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "globals.jsonl").write_text("")

    def record(info: StepInfo) -> None:
        if info.step % stride and info.step != grid.K:
            return
        g = cell_globals(info.field.jet(quad.points, 2), quad.weights, params)
        phi = info.field.jet(snap_grid.points, 0).value
        obs = observables(phi, g, snap_grid.weights)
        state["min"] = min(state["min"], float(phi.min()))
        state["max"] = max(state["max"], float(phi.max()))
        state["final"], state["area"] = obs, g.area
        series.append({"step": info.step, "t": info.t, "v_rms": obs.v_rms, "S_rms": obs.S_rms})
        log.info("step %d t=%g v_rms=%.4g S_rms=%.4g", info.step, info.t, obs.v_rms, obs.S_rms)
        if out is not None:
            ny, nx = snap_grid.shape
            snapshot.write_snapshot(out / f"snap_{info.step:06d}.bin",
                                    phi.reshape(ny, nx, -1), info.t)
            snapshot.append_record(out / "globals.jsonl", _globals_record(info, g, obs))

    t0 = time.perf_counter()
    advance(model, lambda p: tanh_discs(p, centers, cfg.cells.init_radius, params.width, domain),
            coll, basis, Periodic(), TABLEAUS[cfg.time.tableau], grid, sinks=[record],
            c=cfg.solver.rescale, method=cfg.solver.method, rtol=cfg.solver.rtol, keep="last")
    seconds = time.perf_counter() - t0
    result = CellRunResult(state["final"], np.asarray(state["area"]), state["min"], state["max"],
                           grid.K, seconds, series)
    if out is not None:
        summary = {"final_observables": result.final.as_dict(), "area": result.area.tolist(),
                   "target_area": params.target_area, "field_min": result.field_min,
                   "field_max": result.field_max, "steps": result.steps,
                   "centers": centers.tolist()}
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return result


def _globals_record(info: StepInfo, g: CellGlobals, obs: Observables) -> dict:
    return {"step": info.step, "t": info.t, "residual": info.residual,
            "area": g.area.tolist(), "S": g.S.tolist(), "force": g.force.tolist(),
            "velocity": g.velocity.tolist(), "observables": obs.as_dict()}


def run_cells(cfg: RunConfig, out: Path) -> CellRunResult:
    if cfg.model.kind != "cells":
        raise ConfigError("run_cells needs model.kind = cells")
    return simulate_cells(cfg, out)


def observables_from_snapshot(path, record: dict) -> Observables:
    """Recompute observables from a stored snapshot and its globals record."""
    snap = snapshot.read_snapshot(path)
    rows, cols, comps = snap.shape
    phi = snap.values.reshape(rows * cols, comps)
    w = np.full(rows * cols, 1.0 / (rows * cols))
    g = CellGlobals(np.asarray(record["area"]), np.asarray(record["S"]),
                    np.asarray(record["force"]), np.asarray(record["velocity"]))
    return observables(phi, g, w)


# --------------------------------------------------------------------------
# observable sweeps

SWEEP_FIELDS = ("v_rms", "S_rms_excess", "mean_v", "mean_component_speed",
                "mean_component_order", "mean_angle")


def _sweep_one(job):
    cfg, key = job
    try:
        res = simulate_cells(cfg)
        return key, res.final.as_dict(), res.series, ""
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        return key, None, [], f"{type(exc).__name__}: {exc}"


@dataclass
class SweepTable:
    rows: list[dict]
    runs: list[dict]

    def to_csv(self) -> str:
        cols = ["gamma", "zeta", "runs", "failures"]
        for name in SWEEP_FIELDS:
            cols += [f"{name}_mean", f"{name}_std"]
        lines = [",".join(cols)]
        for row in self.rows:
            lines.append(",".join(_fmt(row.get(c, "")) for c in cols))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return str(v)


def run_observable_sweep(cfg: RunConfig, zetas=None, gammas=None, repetitions: int | None = None,
                         workers: int = 1, out: Path | None = None) -> SweepTable:
    """Final-time observables over a (gamma, zeta) grid, mean and std over repetitions.

    Repetition ``r`` uses seed ``basis.seed + r`` for both cell placement and
    features.  ``S_rms_excess`` is ``S_rms - S0_rms`` with the baseline
    taken as the mean ``S_rms`` of the ``zeta = 0`` runs at the same gamma
    (NaN when no such run exists).
    """
    zetas = list(zetas if zetas is not None else cfg.sweep.zeta) or [cfg.cells.zeta]
    gammas = list(gammas if gammas is not None else cfg.sweep.gamma) or [cfg.cells.gamma]
    reps = repetitions if repetitions is not None else cfg.sweep.repetitions
    if reps < 1:
        raise ConfigError("repetitions must be >= 1")
    jobs = []
    for g in gammas:
        for z in zetas:
            for r in range(reps):
                c = cfg.replace("cells", gamma=float(g), zeta=float(z)).replace(
                    "basis", seed=cfg.basis.seed + r)
                jobs.append((c, (float(g), float(z), r)))
    with worker_map(workers) as pmap:
        results = list(pmap(_sweep_one, jobs))

    runs = [{"gamma": k[0], "zeta": k[1], "rep": k[2], "observables": obs, "series": series,
             "error": err} for k, obs, series, err in results]
    baseline = {}
    for g in gammas:
        base = [r["observables"]["S_rms"] for r in runs
                if r["gamma"] == g and r["zeta"] == 0.0 and r["observables"]]
        baseline[float(g)] = float(np.mean(base)) if base else float("nan")
    rows = []
    for g in gammas:
        for z in zetas:
            sel = [r for r in runs if r["gamma"] == g and r["zeta"] == z]
            ok = [r["observables"] for r in sel if r["observables"] is not None]
            row = {"gamma": float(g), "zeta": float(z), "runs": len(ok), "failures": len(sel) - len(ok)}
            for name in SWEEP_FIELDS:
                if name == "S_rms_excess":
                    vals = [o["S_rms"] - baseline[float(g)] for o in ok]
                else:
                    vals = [o[name] for o in ok]
                row[f"{name}_mean"] = float(np.mean(vals)) if vals else float("nan")
                row[f"{name}_std"] = float(np.std(vals)) if vals else float("nan")
            rows.append(row)
    table = SweepTable(rows, runs)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(table.to_csv())
        with open(out / "series.csv", "w") as fh:
            fh.write("gamma,zeta,rep,step,t,v_rms,S_rms\n")
            for r in runs:
                for s in r["series"]:
                    fh.write(f"{r['gamma']!r},{r['zeta']!r},{r['rep']},{s['step']},{s['t']!r},"
                             f"{s['v_rms']!r},{s['S_rms']!r}\n")
    return table


# --------------------------------------------------------------------------
# static fit

def run_fit(cfg: RunConfig, out: Path | None = None) -> dict:
    """Fit the initial condition once and report the residual and test-grid errors."""
    domain = _domain(cfg)
    part = build_partition(domain, cfg.partition.nx, cfg.partition.ny, PoU(cfg.partition.pou))
    coll = build_collocation(part, cfg.collocation.qx, cfg.collocation.qy)
    test = build_test_grid(domain, cfg.collocation.q_test, cfg.collocation.q_test)
    basis = BasisConfig(cfg.basis.n_features, cfg.basis.r_max, Activation(cfg.basis.activation),
                        cfg.basis.seed, cfg.basis.regenerate, cfg.basis.per_component)
    if cfg.model.kind == "cells":
        centers = cell_centers(cfg, domain)
        target = lambda p: tanh_discs(p, centers, cfg.cells.init_radius, cfg.cells.width, domain)
        bc = Periodic()
    else:
        target = lambda p: exact_values(p, 0.0)
        bc = sample_dirichlet(coll, exact_values, 0.0)
    values = target(coll.flat_points)
    bases = basis.sample(part, 0, values.shape[1])
    t0 = time.perf_counter()
    fitted, residual = fit_field(bases, coll, values, bc, cfg.solver.rescale,
                                 cfg.solver.method, cfg.solver.rtol)
    seconds = time.perf_counter() - t0
    report = relative_errors(fitted.jet(test.points, 0).value, target(test.points), seconds)
    summary = {"residual": residual, "l_inf": report.l_inf, "l_2": report.l_2}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "fit.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary["seconds"] = seconds
    return summary
