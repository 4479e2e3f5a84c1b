"""Run configuration as a sectioned ``key = value`` text file.

Every section maps to a dataclass; unknown sections or keys are errors so
typos in long sweeps fail loudly.  :func:`dumps` writes every field, and
``loads(dumps(cfg)) == cfg`` for any valid config.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
import typing
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSection:
    lower: tuple[float, float] = (0.0, 0.0)
    upper: tuple[float, float] = (2 * math.pi, 2 * math.pi)


@dataclass(frozen=True)
class PartitionSection:
    nx: int = 3
    ny: int = 3
    pou: str = "indicator"


@dataclass(frozen=True)
class BasisSection:
    n_features: int = 200
    r_max: float = 1.7
    activation: str = "tanh"
    seed: int = 0
    regenerate: bool = True
    per_component: bool = False


@dataclass(frozen=True)
class CollocationSection:
    qx: int = 20
    qy: int = 20
    q_test: int = 40
    quad: int = 200


@dataclass(frozen=True)
class TimeSection:
    T: float = 1.0
    K: int = 20
    tableau: str = "heun"

    @property
    def dt(self) -> float:
        return self.T / self.K if self.K else 0.0


@dataclass(frozen=True)
class ModelSection:
    kind: str = "manufactured"


@dataclass(frozen=True)
class CellsSection:
    gamma: float = 0.01
    width: float = 2.5
    mu: float = 3.0
    kappa: float = 0.1
    radius: float = 8.0
    xi: float = 2.0
    zeta: float = 0.005
    n_cells: int = 8
    init_radius: float = 6.0
    centers: tuple[tuple[float, float], ...] = ()
    min_separation: float = 0.0


@dataclass(frozen=True)
class SolverSection:
    rescale: float = 100.0
    method: str = "blocked"
    rtol: float = 1e-12


@dataclass(frozen=True)
class OutputSection:
    directory: str = ""
    stride: int = 1


@dataclass(frozen=True)
class SweepSection:
    knob: str = "dt"
    values: tuple[float, ...] = ()
    zeta: tuple[float, ...] = ()
    gamma: tuple[float, ...] = ()
    repetitions: int = 1


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSection = field(default_factory=DomainSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    basis: BasisSection = field(default_factory=BasisSection)
    collocation: CollocationSection = field(default_factory=CollocationSection)
    time: TimeSection = field(default_factory=TimeSection)
    model: ModelSection = field(default_factory=ModelSection)
    cells: CellsSection = field(default_factory=CellsSection)
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputSection = field(default_factory=OutputSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def replace(self, section: str, **changes) -> "RunConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})


_CHOICES = {
    ("partition", "pou"): ("indicator", "sinblend"),
    ("basis", "activation"): ("tanh", "cos"),
    ("time", "tableau"): ("heun", "midpoint", "euler", "rk4"),
    ("model", "kind"): ("manufactured", "cells"),
    ("solver", "method"): ("blocked", "direct"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _section_types(cls) -> dict[str, object]:
    return typing.get_type_hints(cls)


def _parse_value(text: str, tp, where: str):
    text = text.strip()
    try:
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        if tp is str:
            return text
        if tp is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if tp == tuple[float, float] or tp == tuple[float, ...]:
            vals = tuple(float(v) for v in text.replace(",", " ").split())
            if tp == tuple[float, float] and len(vals) != 2:
                raise ValueError("expected two numbers")
            return vals
        if tp == tuple[tuple[float, float], ...]:
            pairs = []
            for chunk in filter(None, (c.strip() for c in text.split(";"))):
                xy = tuple(float(v) for v in chunk.replace(",", " ").split())
                if len(xy) != 2:
                    raise ValueError(f"expected 'x y' pairs, got {chunk!r}")
                pairs.append(xy)
            return tuple(pairs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unsupported type {tp}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(" ".join(repr(float(v)) for v in pair) for pair in value)
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def validate(cfg: RunConfig) -> RunConfig:
    lo, hi = cfg.domain.lower, cfg.domain.upper
    if not (hi[0] > lo[0] and hi[1] > lo[1]):
        raise ConfigError("domain: upper must exceed lower in both coordinates")
    checks = [
        (cfg.partition.nx >= 1 and cfg.partition.ny >= 1, "partition: nx, ny must be positive"),
        (cfg.basis.n_features >= 1, "basis: n_features must be positive"),
        (cfg.basis.r_max > 0, "basis: r_max must be positive"),
        (cfg.collocation.qx >= 2 and cfg.collocation.qy >= 2, "collocation: qx, qy must be >= 2"),
        (cfg.collocation.q_test >= 2 and cfg.collocation.quad >= 1, "collocation: q_test >= 2, quad >= 1"),
        (cfg.time.K >= 0 and cfg.time.T > 0, "time: need K >= 0 and T > 0"),
        (cfg.cells.width > 0 and cfg.cells.radius > 0 and cfg.cells.xi > 0,
         "cells: width, radius, xi must be positive"),
        (cfg.cells.n_cells >= 1, "cells: n_cells must be >= 1"),
        (not cfg.cells.centers or len(cfg.cells.centers) == cfg.cells.n_cells,
         "cells: number of centers must equal n_cells"),
        (cfg.solver.rescale > 0 and cfg.solver.rtol > 0, "solver: rescale and rtol must be positive"),
        (cfg.output.stride >= 1, "output: stride must be >= 1"),
        (cfg.sweep.repetitions >= 1, "sweep: repetitions must be >= 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    for (sec, key), allowed in _CHOICES.items():
        value = getattr(getattr(cfg, sec), key)
        if value not in allowed:
            raise ConfigError(f"{sec}.{key}: {value!r} not one of {', '.join(allowed)}")
    return cfg


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    sections = _section_types(RunConfig)
    kwargs = {}
    for name in parser.sections():
        if name not in sections:
            raise ConfigError(f"unknown section [{name}]")
        cls = sections[name]
        types = _section_types(cls)
        values = {}
        for key, raw in parser.items(name):
            if key not in types:
                raise ConfigError(f"unknown key {key!r} in section [{name}]")
            values[key] = _parse_value(raw, types[key], f"{name}.{key}")
        kwargs[name] = cls(**values)
    return validate(RunConfig(**kwargs))


def dumps(cfg: RunConfig) -> str:
    lines = []
    for name in _section_types(RunConfig):
        sec = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in dataclasses.fields(sec):
            lines.append(f"{f.name} = {_format_value(getattr(sec, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def save(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(cfg))
