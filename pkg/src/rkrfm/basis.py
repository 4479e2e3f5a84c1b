"""Random feature functions on each subdomain with closed-form derivatives.

A feature is ``sigma(W . xt + b)`` where ``xt`` is the point in the
subdomain's normalized coordinates.  Derivatives with respect to physical
coordinates are ``sigma^(k)(u) * (Wx/rx)^ax * (Wy/ry)^ay`` with
``k = ax + ay``; only the five univariate tables ``sigma^(0..4)`` are ever
computed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import Partition, normalize
from .jet import MAX_ORDER, check_midx, multi_index, multi_indices, n_multi


class Activation(enum.Enum):
    TANH = "tanh"
    COS = "cos"


def activation_derivatives(activation: Activation | str, u: np.ndarray, order: int) -> np.ndarray:
    """Stack ``[sigma(u), sigma'(u), ..., sigma^(order)(u)]``."""
    activation = Activation(activation)
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"activation derivative order {order} not in [0, {MAX_ORDER}]")
    return _kernels.derivatives(u, order, activation is Activation.TANH)


@dataclass(frozen=True, eq=False)
class FeatureBasis:
    """Per-subdomain random weights ``W`` (M, J, 2) and biases ``b`` (M, J)."""

    partition: Partition
    n_features: int
    activation: Activation
    r_max: float
    seed: int
    step: int
    weights: np.ndarray = field(repr=False)
    biases: np.ndarray = field(repr=False)
    component: int = 0

    @property
    def n_columns(self) -> int:
        return self.partition.n_subdomains * self.n_features

    def columns(self, n: int) -> slice:
        return slice(n * self.n_features, (n + 1) * self.n_features)

    def scales(self, n: int, order: int) -> np.ndarray:
        """Chain-rule factors ``(Wx/rx)^ax (Wy/ry)^ay`` for every multi-index, shape (n_multi, J)."""
        kx, ky = (self.weights[n] / self.partition.radii[n]).T
        out = np.empty((n_multi(order), self.n_features))
        for a, (ax, ay) in enumerate(multi_indices(order)):
            out[a] = kx**ax * ky**ay
        return out

    def preactivation(self, n: int, points) -> np.ndarray:
        xt = normalize(points, self.partition, n)
        return xt @ self.weights[n].T + self.biases[n]

    def tables(self, n: int, points, order: int) -> np.ndarray:
        """``sigma^(k)`` of every feature of subdomain ``n`` at ``points``, (order+1, P, J)."""
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"activation derivative order {order} not in [0, {MAX_ORDER}]")
        xt = normalize(points, self.partition, n)
        return _kernels.feature_tables(xt, self.weights[n], self.biases[n], order,
                                       self.activation is Activation.TANH)


def sample_basis(partition: Partition, n_features: int, r_max: float,
                 activation: Activation | str = Activation.TANH, seed: int = 0,
                 step: int = 0, component: int = 0) -> FeatureBasis:
    """Draw ``W, b ~ U(-r_max, r_max)``.

    Each subdomain has its own Philox stream keyed by
    ``(seed, step, subdomain, component)``; within a stream the draws run
    feature by feature over the slots ``(Wx, Wy, b)``.  Regenerating any
    one subdomain or step therefore never depends on the others.
    """
    if n_features < 1:
        raise ValueError("need at least one feature per subdomain")
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    M = partition.n_subdomains
    params = np.empty((M, n_features, 3))
    for n in range(M):
        key = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(step), n, int(component)])
        rng = np.random.Generator(np.random.Philox(key))
        params[n] = rng.uniform(-r_max, r_max, size=(n_features, 3))
    return FeatureBasis(partition, int(n_features), Activation(activation), float(r_max),
                        int(seed), int(step), params[:, :, :2].copy(), params[:, :, 2].copy(),
                        int(component))


def _check_inside(basis: FeatureBasis, n: int, points: np.ndarray) -> None:
    xt = normalize(points, basis.partition, n)
    if np.any(np.abs(xt) > 1.0 + 1e-12):
        raise ValueError(f"points lie outside subdomain {n}")


def eval_feature(basis: FeatureBasis, n: int, j: int, point, midx=(0, 0)) -> float:
    ax, ay = check_midx(midx)
    p = np.asarray(point, dtype=float).reshape(1, 2)
    xt = normalize(p, basis.partition, n)[0]
    w = basis.weights[n, j]
    u = np.array([w @ xt + basis.biases[n, j]])
    k = ax + ay
    d = activation_derivatives(basis.activation, u, k)[k, 0]
    kx, ky = w / basis.partition.radii[n]
    return float(d * kx**ax * ky**ay)


def eval_design_block(basis: FeatureBasis, n: int, points, midx=(0, 0)) -> np.ndarray:
    """Matrix of ``d^midx phi_nj(points[q])``, shape ``(len(points), J)``."""
    ax, ay = check_midx(midx)
    p = np.atleast_2d(np.asarray(points, dtype=float))
    _check_inside(basis, n, p)
    k = ax + ay
    table = basis.tables(n, p, k)
    kx, ky = (basis.weights[n] / basis.partition.radii[n]).T
    return table[k] * (kx**ax * ky**ay)


def derivative_tables(basis: FeatureBasis, n: int, points, order: int) -> np.ndarray:
    """``sigma^(k)(u)`` for ``k <= order`` at the given points, shape (order+1, P, J)."""
    return basis.tables(n, points, order)


def design_jet(basis: FeatureBasis, n: int, points, order: int) -> np.ndarray:
    """All design blocks up to ``order``, shape ``(n_multi(order), P, J)``."""
    tables = derivative_tables(basis, n, points, order)
    scales = basis.scales(n, order)
    return np.stack([tables[ax + ay] * scales[multi_index(ax, ay)]
                     for ax, ay in multi_indices(order)])
