"""Binary field snapshots.

A snapshot file is a 32-byte header followed by ``rows * cols * components``
little-endian float64 values in C order (row, col, component)::

    magic    8s   b"RKRFMSNP"
    version  u4
    rows     u4
    cols     u4
    components u4
    time     f8

Per-snapshot globals and observables live in a JSON-lines sidecar.
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RKRFMSNP"
VERSION = 1
HEADER = struct.Struct("<8sIIIId")
assert HEADER.size == 32


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Snapshot:
    time: float
    values: np.ndarray   # (rows, cols, components)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def write_snapshot(path, values: np.ndarray, t: float) -> None:
    values = np.asarray(values, dtype="<f8")
    if values.ndim != 3:
        raise SnapshotError("snapshot values must be (rows, cols, components)")
    rows, cols, comps = values.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, rows, cols, comps, float(t)))
        fh.write(np.ascontiguousarray(values).tobytes())


def read_header(path) -> tuple[int, int, int, float]:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, rows, cols, comps, t = HEADER.unpack(raw)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: not a snapshot file")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {version}")
    return rows, cols, comps, t


def read_snapshot(path) -> Snapshot:
    rows, cols, comps, t = read_header(path)
    data = np.fromfile(path, dtype="<f8", offset=HEADER.size)
    if data.size != rows * cols * comps:
        raise SnapshotError(f"{path}: expected {rows * cols * comps} values, found {data.size}")
    return Snapshot(t, data.reshape(rows, cols, comps).astype(float))


def export_csv(snapshot: Snapshot, path, x: np.ndarray, y: np.ndarray) -> None:
    """Long-format CSV ``x, y, phi_0, ...`` for plotting tools."""
    rows, cols, comps = snapshot.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"] + [f"phi_{i}" for i in range(comps)])
        for r in range(rows):
            for c in range(cols):
                w.writerow([repr(float(x[c])), repr(float(y[r]))]
                           + [repr(float(v)) for v in snapshot.values[r, c]])


def append_record(path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_records(path) -> list[dict]:
    p = Path(path)
    if not p.exists():
        return []
    return [json.loads(line) for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]
