# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled derivative rows of the activation tables.

The transcendental row (``tanh``, or ``cos`` and ``sin``) is evaluated by
numpy, whose vectorized versions beat scalar libm calls by a wide margin.
These loops fill the remaining rows in a single pass instead of one
temporary array per arithmetic operation.
"""


def tanh_rows(double[:, ::1] out):
    """Given ``out[0] = tanh(u)``, write derivatives 1..len(out)-1 in place."""
    cdef Py_ssize_t order = out.shape[0] - 1, n = out.shape[1], i
    cdef double s, s2, d1
    if order == 0:
        return
    with nogil:
        for i in range(n):
            s = out[0, i]
            s2 = s * s
            d1 = 1.0 - s2
            out[1, i] = d1
            if order >= 2:
                out[2, i] = (-2.0 * s) * d1
            if order >= 3:
                out[3, i] = (6.0 * s2 - 2.0) * d1
            if order >= 4:
                out[4, i] = (s * (16.0 - 24.0 * s2)) * d1


def cos_rows(double[:, ::1] out, const double[::1] sin_u):
    """Given ``out[0] = cos(u)``, write ``-sin, -cos, sin, cos`` rows in place."""
    cdef Py_ssize_t order = out.shape[0] - 1, n = out.shape[1], i
    cdef double c, s
    if order == 0:
        return
    with nogil:
        for i in range(n):
            c = out[0, i]
            s = sin_u[i]
            out[1, i] = -s
            if order >= 2:
                out[2, i] = -c
            if order >= 3:
                out[3, i] = s
            if order >= 4:
                out[4, i] = c
