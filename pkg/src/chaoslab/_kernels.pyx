# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: stopped Brownian steps and direct trigonometric sums.

Every routine consumes pre-drawn normals and uniforms so that the numpy
twin in ``_kernels_py`` reproduces it draw for draw.
"""
from libc.math cimport exp, sqrt, cos, sin, M_PI


cdef inline signed char _step(double x, double lo, double hi, double z,
                              double u, double sdt, double dt,
                              double* x_new) noexcept nogil:
    cdef double y = x + sdt * z
    cdef double plo, phi
    if y <= lo:
        x_new[0] = lo
        return -1
    if y >= hi:
        x_new[0] = hi
        return 1
    plo = exp(-2.0 * (x - lo) * (y - lo) / dt)
    phi = exp(-2.0 * (hi - x) * (hi - y) / dt)
    if u < plo:
        x_new[0] = lo
        return -1
    if u < plo + phi:
        x_new[0] = hi
        return 1
    x_new[0] = y
    return 0


def bridge_step(double[::1] x, const double[::1] lo, const double[::1] hi,
                const double[::1] z, const double[::1] u, double dt,
                double[::1] dx, signed char[::1] side):
    """One step for each path; x is updated in place and dx holds the move."""
    cdef Py_ssize_t i, m = x.shape[0]
    cdef double sdt = sqrt(dt)
    cdef double xn
    with nogil:
        for i in range(m):
            side[i] = _step(x[i], lo[i], hi[i], z[i], u[i], sdt, dt, &xn)
            dx[i] = xn - x[i]
            x[i] = xn


def exit_block(double[::1] x, const double[::1] lo, const double[::1] hi,
               const double[:, ::1] z, const double[:, ::1] u, double dt,
               long[::1] steps, signed char[::1] side):
    """Run up to z.shape[1] steps per path, stopping at the first exit.

    steps[i] is the index of the exit step inside the block, or -1.
    """
    cdef Py_ssize_t i, s, m = x.shape[0], S = z.shape[1]
    cdef double sdt = sqrt(dt)
    cdef double xi, xn
    cdef signed char sd
    with nogil:
        for i in range(m):
            xi = x[i]
            steps[i] = -1
            side[i] = 0
            for s in range(S):
                sd = _step(xi, lo[i], hi[i], z[i, s], u[i, s], sdt, dt, &xn)
                xi = xn
                if sd != 0:
                    steps[i] = s
                    side[i] = sd
                    break
            x[i] = xi


def series_direct(const double[::1] t, const double[::1] a1,
                  const double[::1] a2, long k0, double[::1] out):
    """out[j] = sum_k (a1 cos(2 pi k t_j) + a2 sin(2 pi k t_j)) / sqrt(k).

    k runs over k0, k0+1, ...; the rotation recurrence is reseeded every
    64 terms to keep the phase error at rounding level.
    """
    cdef Py_ssize_t j, i, m = t.shape[0], n = a1.shape[0]
    cdef double th, c, s, c1, s1, cn, acc, k
    with nogil:
        for j in range(m):
            th = 2.0 * M_PI * t[j]
            c1 = cos(th)
            s1 = sin(th)
            acc = 0.0
            c = 0.0
            s = 0.0
            for i in range(n):
                k = <double>(k0 + i)
                if i % 64 == 0:
                    c = cos(th * k)
                    s = sin(th * k)
                acc += (a1[i] * c + a2[i] * s) / sqrt(k)
                cn = c * c1 - s * s1
                s = s * c1 + c * s1
                c = cn
            out[j] = acc
