"""Block least-squares system for a random-feature fit and the fitted field.

The stacked system is::

    [A; B_x; B_y; C0_x; C0_y; C1_x; C1_y] U = [f_A; f_Bx; f_By; 0; 0; 0; 0]

``A`` fits target values at every collocation point, ``B`` imposes the
boundary condition and ``C0``/``C1`` make values and normal derivatives
agree across subdomain interfaces.  ``U`` has one column per field
component; all components share one matrix and are solved together.
"""
from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .basis import FeatureBasis
from .geometry import (BOTTOM, LEFT, RIGHT, TOP, CollocationSet, Partition, PoU,
                       normalize, pou_value)
from .jet import MAX_ORDER, Jet, check_midx, multi_index, multi_indices, n_multi

log = logging.getLogger(__name__)

DEFAULT_RESCALE = 100.0
DEFAULT_RTOL = 1e-12


class SolverError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# boundary conditions

@dataclass(frozen=True)
class Periodic:
    """Opposite domain edges carry equal values and normal derivatives."""


@dataclass(frozen=True, eq=False)
class DirichletSampled:
    """Prescribed values at the boundary collocation points.

    ``values_x`` matches :func:`boundary_points` ``[0]`` (left edges, then
    right edges) and ``values_y`` matches ``[1]`` (bottom/top pairs per
    column of subdomains); both have one column per component.
    """

    values_x: np.ndarray
    values_y: np.ndarray


BoundaryCondition = Periodic | DirichletSampled


def _bx_edges(coll: CollocationSet):
    part = coll.partition
    left = [(part.index(0, iy), LEFT) for iy in range(part.ny)]
    right = [(part.index(part.nx - 1, iy), RIGHT) for iy in range(part.ny)]
    return left + right


def _by_edges(coll: CollocationSet):
    part = coll.partition
    out = []
    for ix in range(part.nx):
        out.append((part.index(ix, 0), BOTTOM))
        out.append((part.index(ix, part.ny - 1), TOP))
    return out


def boundary_points(coll: CollocationSet) -> tuple[np.ndarray, np.ndarray]:
    """Boundary collocation points in ``B_x`` and ``B_y`` row order."""
    px = np.concatenate([coll.edge_points(n, s) for n, s in _bx_edges(coll)])
    py = np.concatenate([coll.edge_points(n, s) for n, s in _by_edges(coll)])
    return px, py


def sample_dirichlet(coll: CollocationSet, g, t: float) -> DirichletSampled:
    """Evaluate ``g(points, t) -> (P, d)`` on the boundary collocation points."""
    px, py = boundary_points(coll)
    return DirichletSampled(np.atleast_2d(g(px, t)), np.atleast_2d(g(py, t)))


# --------------------------------------------------------------------------
# system

@dataclass(frozen=True, eq=False)
class Block:
    name: str
    matrix: np.ndarray
    rhs: np.ndarray
    # (rows, 2): subdomains touched by each row; -1 in column 1 for local rows
    owners: np.ndarray


@dataclass(frozen=True, eq=False)
class LinearSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    owners: np.ndarray
    scales: np.ndarray
    block_names: tuple[str, ...]
    block_slices: tuple[slice, ...]
    n_subdomains: int
    n_features: int

    @classmethod
    def stack(cls, blocks: list[Block], n_subdomains: int, n_features: int) -> "LinearSystem":
        blocks = [b for b in blocks if b.matrix.shape[0] > 0] or blocks[:1]
        slices, start = [], 0
        for b in blocks:
            slices.append(slice(start, start + b.matrix.shape[0]))
            start += b.matrix.shape[0]
        matrix = np.concatenate([b.matrix for b in blocks])
        rhs = np.concatenate([b.rhs for b in blocks])
        owners = np.concatenate([b.owners for b in blocks])
        return cls(matrix, rhs, owners, np.ones(matrix.shape[0]), tuple(b.name for b in blocks),
                   tuple(slices), n_subdomains, n_features)

    def block(self, name: str) -> np.ndarray:
        return self.matrix[self.block_slices[self.block_names.index(name)]]

    def block_rhs(self, name: str) -> np.ndarray:
        return self.rhs[self.block_slices[self.block_names.index(name)]]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def _local_rows(basis, n, pts, midx):
    block = np.zeros((len(pts), basis.n_columns))
    block[:, basis.columns(n)] = _design(basis, n, pts, midx)
    return block


def _design(basis: FeatureBasis, n: int, pts: np.ndarray, midx) -> np.ndarray:
    # no ownership check: edge and interface points sit on the closed subdomain
    ax, ay = midx
    k = ax + ay
    table = basis.tables(n, pts, k)[k]
    if k == 0:
        return table
    return table * basis.scales(n, k)[multi_index(ax, ay)]


def _owners(count: int, n: int, m: int = -1) -> np.ndarray:
    out = np.empty((count, 2), dtype=np.int64)
    out[:, 0] = n
    out[:, 1] = m
    return out


def assemble_interior(basis: FeatureBasis, coll: CollocationSet, targets) -> Block:
    """Value rows at every collocation point; block diagonal for the indicator PoU."""
    part = coll.partition
    M, Q, J = part.n_subdomains, coll.n_points, basis.n_features
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if targets.shape[0] != M * Q:
        raise ValueError(f"expected {M * Q} target rows, got {targets.shape[0]}")
    A = np.zeros((M * Q, M * J))
    owners = np.empty((M * Q, 2), dtype=np.int64)
    if part.pou is PoU.INDICATOR:
        for n in range(M):
            rows = slice(n * Q, (n + 1) * Q)
            A[rows, basis.columns(n)] = _design(basis, n, coll.points[n], (0, 0))
            owners[rows] = _owners(Q, n)
    else:
        pts = coll.flat_points
        for m in range(M):
            w = pou_value(part, m, pts)
            hit = w > 0
            if hit.any():
                A[np.ix_(hit, np.arange(m * J, (m + 1) * J))] = w[hit, None] * _design(basis, m, pts[hit], (0, 0))
        # sin-blend rows may touch many subdomains: mark as coupling rows
        owners[:, 0] = np.repeat(np.arange(M), Q)
        owners[:, 1] = -2
    return Block("A", A, targets.copy(), owners)


def _pair_rows(basis, n, pts_n, m, pts_m, midx):
    rows = np.zeros((len(pts_n), basis.n_columns))
    rows[:, basis.columns(n)] = _design(basis, n, pts_n, midx)
    rows[:, basis.columns(m)] -= _design(basis, m, pts_m, midx)
    return rows


def assemble_boundary(basis: FeatureBasis, coll: CollocationSet, bc: BoundaryCondition,
                      n_components: int = 1) -> tuple[Block, Block]:
    part = coll.partition
    if isinstance(bc, DirichletSampled):
        blocks = []
        for name, edges, values in (("B_x", _bx_edges(coll), bc.values_x),
                                    ("B_y", _by_edges(coll), bc.values_y)):
            mats, owners = [], []
            for n, side in edges:
                pts = coll.edge_points(n, side)
                mats.append(_local_rows(basis, n, pts, (0, 0)))
                owners.append(_owners(len(pts), n))
            mat = np.concatenate(mats)
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                values = values[:, None]
            if values.shape[0] != mat.shape[0]:
                raise ValueError(f"{name}: expected {mat.shape[0]} boundary values, got {values.shape[0]}")
            blocks.append(Block(name, mat, values.copy(), np.concatenate(owners)))
        return blocks[0], blocks[1]
    if isinstance(bc, Periodic):
        out = []
        for name, axis in (("B_x", "x"), ("B_y", "y")):
            mats, owners = [], []
            if axis == "x":
                pairs = [(part.index(0, iy), LEFT, part.index(part.nx - 1, iy), RIGHT) for iy in range(part.ny)]
                deriv = (1, 0)
            else:
                pairs = [(part.index(ix, 0), BOTTOM, part.index(ix, part.ny - 1), TOP) for ix in range(part.nx)]
                deriv = (0, 1)
            for midx in ((0, 0), deriv):
                for n, sn, m, sm in pairs:
                    pn, pm = coll.edge_points(n, sn), coll.edge_points(m, sm)
                    mats.append(_pair_rows(basis, n, pn, m, pm, midx))
                    owners.append(_owners(len(pn), n, m))
            mat = np.concatenate(mats)
            out.append(Block(name, mat, np.zeros((mat.shape[0], n_components)), np.concatenate(owners)))
        return out[0], out[1]
    raise TypeError(f"unsupported boundary condition {bc!r}")


def assemble_continuity(basis: FeatureBasis, coll: CollocationSet, n_components: int = 1) -> list[Block]:
    """C0 and C1 interface rows ``A_n(edge) - A_m(edge)``, zero right-hand side."""
    part = coll.partition
    J = basis.n_columns
    if part.pou is not PoU.INDICATOR:
        warnings.warn("continuity rows are only used with the indicator partition of unity", stacklevel=2)
        empty = np.zeros((0, J))
        return [Block(nm, empty, np.zeros((0, n_components)), np.zeros((0, 2), dtype=np.int64))
                for nm in ("C0_x", "C0_y", "C1_x", "C1_y")]
    pairs = list(coll.interface_pairs())
    out = []
    for name, axis, midx in (("C0_x", "x", (0, 0)), ("C0_y", "y", (0, 0)),
                             ("C1_x", "x", (1, 0)), ("C1_y", "y", (0, 1))):
        mats, owners = [], []
        for ax_, n, m, idx_n, idx_m in pairs:
            if ax_ != axis:
                continue
            mats.append(_pair_rows(basis, n, coll.points[n, idx_n], m, coll.points[m, idx_m], midx))
            owners.append(_owners(len(idx_n), n, m))
        mat = np.concatenate(mats) if mats else np.zeros((0, J))
        own = np.concatenate(owners) if owners else np.zeros((0, 2), dtype=np.int64)
        out.append(Block(name, mat, np.zeros((mat.shape[0], n_components)), own))
    return out


def assemble_system(basis: FeatureBasis, coll: CollocationSet, targets, bc: BoundaryCondition | None) -> LinearSystem:
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    d = targets.shape[1]
    blocks = [assemble_interior(basis, coll, targets)]
    if bc is not None:
        blocks.extend(assemble_boundary(basis, coll, bc, d))
    if coll.partition.pou is PoU.INDICATOR:
        blocks.extend(assemble_continuity(basis, coll, d))
    return LinearSystem.stack(blocks, coll.partition.n_subdomains, basis.n_features)


def apply_rescaling(system: LinearSystem, c: float = DEFAULT_RESCALE) -> LinearSystem:
    """Scale every row (and its right-hand side) so its max-abs entry is ``c``."""
    if not c > 0:
        raise ValueError("rescaling constant must be positive")
    row_max = np.max(np.abs(system.matrix), axis=1)
    zero = np.flatnonzero(row_max == 0)
    if zero.size:
        i = int(zero[0])
        for name, sl in zip(system.block_names, system.block_slices):
            if sl.start <= i < sl.stop:
                raise ValueError(f"all-zero row {i - sl.start} in block {name}")
    lam = c / row_max
    return replace(system, matrix=system.matrix * lam[:, None], rhs=system.rhs * lam[:, None],
                   scales=system.scales * lam)


# --------------------------------------------------------------------------
# least squares

def solve_least_squares(system: LinearSystem, method: str = "blocked", rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Minimum-norm least-squares coefficients for all right-hand sides at once.

    ``direct`` is a dense SVD solve of the whole system with singular
    values below ``rtol * sigma_max`` discarded.  ``blocked`` exploits the
    structure: rows touching a single subdomain are compressed by a local
    truncated SVD, then the interface and periodic rows are solved in the
    reduced coordinates.  Both minimise the same residual; ``blocked``
    restricts each subdomain's coefficients to the dominant right-singular
    subspace of its local rows.
    """
    A, F = system.matrix, system.rhs
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(F))):
        raise SolverError("non-finite entries in the least-squares system")
    if A.shape[0] < A.shape[1]:
        log.warning("underdetermined system: %d rows < %d columns", *A.shape)
    if method == "direct":
        return _solve_direct(A, F, rtol)
    if method == "blocked":
        if np.any(system.owners[:, 1] == -2):
            return _solve_direct(A, F, rtol)
        return _solve_blocked(system, rtol)
    raise ValueError(f"unknown least-squares method {method!r}")


def _solve_direct(A, F, rtol):
    try:
        U, *_ = scipy.linalg.lstsq(A, F, cond=rtol, lapack_driver="gelsd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(str(exc)) from exc
    return U


def _solve_blocked(system: LinearSystem, rtol: float) -> np.ndarray:
    A, F, owners = system.matrix, system.rhs, system.owners
    M, J = system.n_subdomains, system.n_features
    d = F.shape[1]
    local = (owners[:, 1] < 0) | (owners[:, 1] == owners[:, 0])
    coupled = np.flatnonzero(~local)

    factors = []
    for n in range(M):
        rows = np.flatnonzero(local & (owners[:, 0] == n))
        cols = slice(n * J, (n + 1) * J)
        if rows.size == 0:
            factors.append((np.zeros((0, 0)), np.zeros((J, 0)), np.zeros(0), rows))
            continue
        try:
            Ul, s, Vt = np.linalg.svd(A[rows, cols], full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"local SVD failed on subdomain {n}: {exc}") from exc
        factors.append((Ul, Vt.T, s, rows))
    s_max = max((f[2][0] for f in factors if f[2].size), default=0.0)
    if s_max == 0.0:
        return np.zeros((M * J, d))
    cutoff = rtol * s_max

    # reduced coordinates w_n with u_n = V_n diag(1/s_n) w_n
    maps, bases, offsets = [], [], [0]
    for Ul, V, s, rows in factors:
        k = int(np.count_nonzero(s > cutoff))
        maps.append(V[:, :k] / s[:k])
        bases.append(Ul[:, :k].T)
        offsets.append(offsets[-1] + k)
    K = offsets[-1]

    coupling = None
    if coupled.size:
        Ct = np.zeros((coupled.size, K))
        for n in range(M):
            Ct[:, offsets[n]:offsets[n + 1]] = A[coupled, n * J:(n + 1) * J] @ maps[n]
        # split w into range(Ct^T) and its complement; the complement keeps g
        Z, T = np.linalg.qr(Ct.T, mode="reduced")
        stacked = np.concatenate([np.eye(Z.shape[1]), T.T])
        Us, ss, Vst = np.linalg.svd(stacked, full_matrices=False)
        keep = ss > np.finfo(float).eps * max(stacked.shape) * ss[0]
        coupling = (Z, Us[:, keep].T, Vst[keep].T / ss[keep])

    # the factorizations are shared; each right-hand side goes through the same
    # vector operations, so batching columns never changes the result
    U = np.zeros((M * J, d))
    for j in range(d):
        f = F[:, j]
        g = np.concatenate([B @ f[rows] for B, (*_, rows) in zip(bases, factors)])
        w = g
        if coupling is not None:
            Z, Uc, Vc = coupling
            zg = Z.T @ g
            a = Vc @ (Uc @ np.concatenate([zg, f[coupled]]))
            w = g - Z @ zg + Z @ a
        for n in range(M):
            U[n * J:(n + 1) * J, j] = maps[n] @ w[offsets[n]:offsets[n + 1]]
    return U


def residual_norm(system: LinearSystem, U: np.ndarray) -> float:
    """Relative Frobenius residual of the (rescaled) system."""
    r = system.matrix @ U - system.rhs
    denom = np.linalg.norm(system.rhs)
    return float(np.linalg.norm(r) / denom) if denom > 0 else float(np.linalg.norm(r))


def dump_system(system: LinearSystem, U: np.ndarray | None, path) -> None:
    """Write matrix, right-hand side and (optionally) ``U`` as flat f64 arrays.

    Each array is preceded by a ``<qq`` (rows, cols) header.
    """
    with open(Path(path), "wb") as fh:
        for arr in (system.matrix, system.rhs) + ((U,) if U is not None else ()):
            arr = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(struct.pack("<qq", *arr.shape))
            fh.write(arr.tobytes())


def load_dump(path) -> list[np.ndarray]:
    out = []
    with open(Path(path), "rb") as fh:
        while header := fh.read(16):
            rows, cols = struct.unpack("<qq", header)
            out.append(np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(rows, cols))
    return out


# --------------------------------------------------------------------------
# fitted field

@dataclass(frozen=True, eq=False)
class FittedField:
    """Random-feature field: ``bases`` is one shared basis or one per component."""

    partition: Partition
    bases: tuple[FeatureBasis, ...]
    coefficients: np.ndarray = field(repr=False)
    t: float = 0.0

    @property
    def n_components(self) -> int:
        return self.coefficients.shape[1]

    def _groups(self):
        """(basis, component indices) pairs."""
        if len(self.bases) == 1:
            return [(self.bases[0], np.arange(self.n_components))]
        return [(b, np.array([i])) for i, b in enumerate(self.bases)]

    def _subdomain_jet(self, n: int, pts: np.ndarray, order: int) -> np.ndarray:
        out = np.empty((n_multi(order), len(pts), self.n_components))
        for basis, comps in self._groups():
            tables = basis.tables(n, pts, order)
            Un = self.coefficients[basis.columns(n)][:, comps]
            if order == 0:
                out[0][:, comps] = tables[0] @ Un
                continue
            scales = basis.scales(n, order)
            # multi-indices of total order k share sigma^(k): one product per k
            for k in range(order + 1):
                first = k * (k + 1) // 2
                rows = range(first, first + k + 1)
                coef = np.concatenate([scales[a][:, None] * Un for a in rows], axis=1)
                prod = tables[k] @ coef
                for i, a in enumerate(rows):
                    out[a][:, comps] = prod[:, i * len(comps):(i + 1) * len(comps)]
        return out

    def _sinblend_values(self, pts: np.ndarray) -> np.ndarray:
        out = np.zeros((len(pts), self.n_components))
        for m in range(self.partition.n_subdomains):
            w = pou_value(self.partition, m, pts)
            hit = w > 0
            if hit.any():
                out[hit] += w[hit, None] * self._subdomain_jet(m, pts[hit], 0)[0]
        return out

    def jet(self, points, order: int, subdomain: int | None = None) -> Jet:
        """Jet of the field up to ``order``.

        ``points`` may be a :class:`CollocationSet` (each subdomain's grid is
        evaluated with that subdomain's own features), an array evaluated
        entirely with subdomain ``subdomain``, or an array evaluated with the
        owning subdomain of each point.
        """
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"jet order {order} not in [0, {MAX_ORDER}]")
        if self.partition.pou is not PoU.INDICATOR:
            if order > 0:
                raise NotImplementedError("derivatives of sin-blend fields are not supported")
            pts = points.flat_points if isinstance(points, CollocationSet) else np.atleast_2d(points)
            return Jet(self._sinblend_values(np.asarray(pts, dtype=float))[None])
        if isinstance(points, CollocationSet):
            parts = [self._subdomain_jet(n, points.points[n], order)
                     for n in range(self.partition.n_subdomains)]
            return Jet(np.concatenate(parts, axis=1))
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if subdomain is not None:
            xt = normalize(pts, self.partition, subdomain)
            if np.any(np.abs(xt) > 1.0 + 1e-9):
                raise ValueError(f"points lie outside subdomain {subdomain}")
            return Jet(self._subdomain_jet(subdomain, pts, order))
        owner = self.partition.locate(pts)
        out = np.empty((n_multi(order), len(pts), self.n_components))
        for n in np.unique(owner):
            sel = owner == n
            out[:, sel] = self._subdomain_jet(int(n), pts[sel], order)
        return Jet(out)


def eval_field(fitted: FittedField, points, midx=(0, 0), subdomain: int | None = None) -> np.ndarray:
    """Values of ``d^midx`` of every component, shape ``(P, d)``."""
    ax, ay = check_midx(midx)
    k = ax + ay
    if k == 0:
        return fitted.jet(points, 0, subdomain).value
    return fitted.jet(points, k, subdomain)[ax, ay]


def eval_jet(fitted: FittedField, points, order: int, subdomain: int | None = None) -> Jet:
    return fitted.jet(points, order, subdomain)


def fit_field(bases, coll: CollocationSet, targets, bc: BoundaryCondition | None = None,
              c: float = DEFAULT_RESCALE, method: str = "blocked", rtol: float = DEFAULT_RTOL,
              t: float = 0.0) -> tuple[FittedField, float]:
    """Assemble, rescale and solve; returns the field and its relative residual.

    With one basis per component the components are fitted separately.
    """
    if isinstance(bases, FeatureBasis):
        bases = (bases,)
    bases = tuple(bases)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    d = targets.shape[1]
    if len(bases) == 1:
        system = apply_rescaling(assemble_system(bases[0], coll, targets, bc), c)
        U = solve_least_squares(system, method, rtol)
        res = residual_norm(system, U)
    else:
        if len(bases) != d:
            raise ValueError("need one basis per component")
        cols, res2 = [], 0.0
        for i, basis in enumerate(bases):
            bc_i = bc
            if isinstance(bc, DirichletSampled):
                bc_i = DirichletSampled(bc.values_x[:, [i]], bc.values_y[:, [i]])
            system = apply_rescaling(assemble_system(basis, coll, targets[:, [i]], bc_i), c)
            Ui = solve_least_squares(system, method, rtol)
            cols.append(Ui)
            res2 += residual_norm(system, Ui) ** 2
        U = np.hstack(cols)
        res = float(np.sqrt(res2 / d))
    return FittedField(coll.partition, bases, U, t), res
