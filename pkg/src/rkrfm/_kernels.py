"""Activation derivative tables.

Tanh derivatives are polynomials in ``s = tanh(u)``::

    s' = 1 - s^2
    s'' = -2s (1 - s^2)
    s''' = (6s^2 - 2)(1 - s^2)
    s'''' = s (16 - 24s^2)(1 - s^2)

Cosine derivatives pick the quadrant ``cos(u + k pi/2)`` exactly, i.e.
``cos, -sin, -cos, sin``.

Rows past the first come from a compiled loop (``_ckernels``) when it was
built, else from numpy; set ``RKRFM_PURE_PYTHON=1`` to force numpy.
``BACKEND`` names the one in use.  Both evaluate the same expressions in
the same order, so they agree bitwise.
"""
from __future__ import annotations

import os

import numpy as np


def _load_compiled():
    if os.environ.get("RKRFM_PURE_PYTHON", "").strip() not in ("", "0"):
        return None
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()
BACKEND = "compiled" if _compiled is not None else "numpy"


def _use_compiled(backend: str | None) -> bool:
    if backend is None:
        return _compiled is not None
    if backend == "numpy":
        return False
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return True
    raise ValueError(f"unknown backend {backend!r}")


def _tanh_rows_numpy(out: np.ndarray) -> None:
    order = out.shape[0] - 1
    s = out[0]
    s2 = s * s
    np.subtract(1.0, s2, out=out[1])
    if order >= 2:
        np.multiply(-2.0 * s, out[1], out=out[2])
    if order >= 3:
        np.multiply(6.0 * s2 - 2.0, out[1], out=out[3])
    if order >= 4:
        np.multiply(s * (16.0 - 24.0 * s2), out[1], out=out[4])


def _cos_rows_numpy(out: np.ndarray, s: np.ndarray) -> None:
    order = out.shape[0] - 1
    np.negative(s, out=out[1])
    if order >= 2:
        np.negative(out[0], out=out[2])
    if order >= 3:
        out[3] = s
    if order >= 4:
        out[4] = out[0]


def tanh_derivatives(u, order: int, backend: str | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.empty((order + 1,) + u.shape)
    np.tanh(u, out=out[0])
    if order == 0:
        return out
    if _use_compiled(backend):
        _compiled.tanh_rows(out.reshape(order + 1, -1))
    else:
        _tanh_rows_numpy(out)
    return out


def cos_derivatives(u, order: int, backend: str | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.empty((order + 1,) + u.shape)
    np.cos(u, out=out[0])
    if order == 0:
        return out
    s = np.sin(u)
    if _use_compiled(backend):
        _compiled.cos_rows(out.reshape(order + 1, -1), np.ascontiguousarray(s).reshape(-1))
    else:
        _cos_rows_numpy(out, s)
    return out


def derivatives(u, order: int, is_tanh: bool, backend: str | None = None) -> np.ndarray:
    """Activation table ``(order + 1, *u.shape)``."""
    if is_tanh:
        return tanh_derivatives(u, order, backend)
    return cos_derivatives(u, order, backend)


def feature_tables(xt, w, b, order: int, is_tanh: bool, backend: str | None = None) -> np.ndarray:
    """Tables at ``u = xt @ w.T + b``, shape ``(order + 1, P, J)``."""
    u = np.asarray(xt, dtype=float) @ np.asarray(w).T + b
    return derivatives(u, order, is_tanh, backend)
