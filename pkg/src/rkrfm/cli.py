"""Command-line entry point.

Subcommands ``converge``, ``cells``, ``sweep`` and ``fit`` all read a config
file.  The output directory defaults to ``$RKRFM_OUT`` and then to
``./rkrfm-out``.  Exit codes: 0 success, 2 config error, 3 numerical
failure, 4 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as config_mod
from .assembly import SolverError
from .config import ConfigError
from .integrator import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SOLVER = 0, 2, 3, 4
OUT_ENV = "RKRFM_OUT"


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rkrfm", description="Random-feature Runge-Kutta solver")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, type=Path, help="sectioned key = value file")
        p.add_argument("--seed", type=int, help="override basis.seed")
        p.add_argument("--workers", type=int, default=1, help="process pool size")
        p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV})")
        return p

    conv = common(sub.add_parser("converge", help="convergence table for the manufactured problem"))
    conv.add_argument("--knob", help="override sweep.knob")
    conv.add_argument("--values", type=_floats, help="override sweep.values, e.g. '0.5 0.05'")
    common(sub.add_parser("cells", help="cell simulation with snapshots"))
    sw = common(sub.add_parser("sweep", help="observable sweep over zeta and gamma"))
    sw.add_argument("--zeta", type=_floats)
    sw.add_argument("--gamma", type=_floats)
    sw.add_argument("--repetitions", type=int)
    common(sub.add_parser("fit", help="single static fit of the initial condition"))
    return parser


def _out_dir(arg: Path | None, cfg) -> Path:
    if arg is not None:
        return arg
    if cfg.output.directory:
        return Path(cfg.output.directory)
    return Path(os.environ.get(OUT_ENV, "rkrfm-out"))


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from . import runs

    try:
        cfg = config_mod.load(args.config)
        if args.seed is not None:
            cfg = cfg.replace("basis", seed=args.seed)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = _out_dir(args.out, cfg)
        if args.command == "converge":
            study = runs.run_converge(cfg, out, args.knob, args.values, args.workers)
            sys.stdout.write(study.to_csv())
            slope = "undefined" if study.slope is None else f"{study.slope:.4f}"
            print(f"knob={study.knob} rows={len(study.rows)} slope={slope}")
        elif args.command == "cells":
            res = runs.run_cells(cfg, out)
            f = res.final
            print(f"steps={res.steps} seconds={res.seconds:.1f} v_rms={f.v_rms:.6g} "
                  f"S_rms={f.S_rms:.6g} field=[{res.field_min:.4f}, {res.field_max:.4f}] out={out}")
        elif args.command == "sweep":
            table = runs.run_observable_sweep(cfg, args.zeta, args.gamma, args.repetitions,
                                              args.workers, out)
            sys.stdout.write(table.to_csv())
        else:
            s = runs.run_fit(cfg, out)
            print(f"residual={s['residual']:.3e} l_inf={s['l_inf']:.3e} l_2={s['l_2']:.3e} "
                  f"seconds={s['seconds']:.2f}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
