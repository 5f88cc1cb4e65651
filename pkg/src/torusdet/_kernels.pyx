# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused pointwise kernels for the flow inner loop.

The FFTs stay in NumPy (pocketfft is already compiled) and so do the
exponentials (NumPy's exp is SIMD-vectorized; scalar libm is several times
slower).  What lives here is the arithmetic between them, fused into single
passes with Kahan-compensated sums so the volume projection stays exact to
~1e-15 relative.
"""
from libc.math cimport fabs

import numpy as np

cimport numpy as cnp

cnp.import_array()


def rhs_stage(const double[:, ::1] eu, const double[:, ::1] emu,
              const double[:, ::1] L, double[:, ::1] out):
    """Curvature stage of the flow: out <- R0 - R with R = emu * L.

    eu = e^u, emu = e^{-u}, L = -Lap0 u.  Returns
    (r0, sum_eu, min_eu, sup_rhs, var_sum, sum_L) where the sums are plain
    grid sums (no cell-area factor) and var_sum = sum (R - R0)^2 e^u.
    """
    cdef Py_ssize_t n0 = eu.shape[0], n1 = eu.shape[1]
    cdef Py_ssize_t i, j
    cdef double r, d, y, tmp
    cdef double s_eu = 0.0, c_eu = 0.0
    cdef double s_L = 0.0, c_L = 0.0
    cdef double min_eu = eu[0, 0]
    cdef double r0, sup_rhs = 0.0
    cdef double s_var = 0.0, c_var = 0.0

    with nogil:
        for i in range(n0):
            for j in range(n1):
                if eu[i, j] < min_eu:
                    min_eu = eu[i, j]
                y = eu[i, j] - c_eu
                tmp = s_eu + y
                c_eu = (tmp - s_eu) - y
                s_eu = tmp
                y = L[i, j] - c_L
                tmp = s_L + y
                c_L = (tmp - s_L) - y
                s_L = tmp
        r0 = s_L / s_eu
        for i in range(n0):
            for j in range(n1):
                r = emu[i, j] * L[i, j]
                d = r - r0
                y = d * d * eu[i, j] - c_var
                tmp = s_var + y
                c_var = (tmp - s_var) - y
                s_var = tmp
                d = r0 - r
                out[i, j] = d
                if fabs(d) > sup_rhs:
                    sup_rhs = fabs(d)

    return r0, s_eu, min_eu, sup_rhs, s_var, s_L


def rk4_combine(const double[:, ::1] u, const double[:, ::1] k1,
                const double[:, ::1] k2, const double[:, ::1] k3,
                const double[:, ::1] k4, double dt, double[:, ::1] out):
    """out <- u + dt/6 (k1 + 2 k2 + 2 k3 + k4)."""
    cdef Py_ssize_t n0 = u.shape[0], n1 = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double w = dt / 6.0
    with nogil:
        for i in range(n0):
            for j in range(n1):
                out[i, j] = u[i, j] + w * (k1[i, j] + 2.0 * (k2[i, j] + k3[i, j]) + k4[i, j])


def apply_symbol_energy(double complex[:, ::1] uhat, const double[:, ::1] lam,
                        const double[:] colw):
    """uhat <- lam * uhat (in place); returns sum colw * lam * |uhat_before|^2.

    colw carries the Hermitian double-count weights of the rfft2 layout.
    """
    cdef Py_ssize_t n0 = uhat.shape[0], n1 = uhat.shape[1]
    cdef Py_ssize_t i, j
    cdef double s = 0.0, c = 0.0, y, tmp, a
    cdef double complex z

    with nogil:
        for i in range(n0):
            for j in range(n1):
                z = uhat[i, j]
                a = z.real * z.real + z.imag * z.imag
                y = colw[j] * lam[i, j] * a - c
                tmp = s + y
                c = (tmp - s) - y
                s = tmp
                uhat[i, j] = lam[i, j] * z
    return s


def axpy(const double[:, ::1] u, const double[:, ::1] k, double c,
         double[:, ::1] out):
    """out <- u + c * k."""
    cdef Py_ssize_t n0 = u.shape[0], n1 = u.shape[1]
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n0):
            for j in range(n1):
                out[i, j] = u[i, j] + c * k[i, j]
