# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, M_PI

cnp.import_array()

cdef double PLATEAU = 2.5


def radial_profile(s, double s0):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(s, dtype=np.float64).ravel()
    cdef Py_ssize_t n = flat.shape[0], j
    cdef cnp.ndarray[double, ndim=1] P = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] dP = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] d2P = np.empty(n)
    cdef double x, u
    shape = np.shape(s)
    if s0 <= 0.0:
        for j in range(n):
            P[j] = M_PI * flat[j]
            dP[j] = M_PI
            d2P[j] = 0.0
    else:
        for j in range(n):
            x = flat[j]
            if x <= s0:
                P[j] = M_PI * x
                dP[j] = M_PI
                d2P[j] = 0.0
            else:
                u = (x - s0) / (3.0 * s0)
                if u > 1.0:
                    u = 1.0
                P[j] = M_PI * s0 + 3.0 * M_PI * s0 * (u - u * u * u + 0.5 * u * u * u * u)
                dP[j] = M_PI * (1.0 - 3.0 * u * u + 2.0 * u * u * u)
                d2P[j] = M_PI * (6.0 * u * u - 6.0 * u) / (3.0 * s0)
    return P.reshape(shape), dP.reshape(shape), d2P.reshape(shape)


def hamiltonian_diameter(points):
    cdef cnp.ndarray[double, ndim=2] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0], m = pts.shape[1], a, b, c
    cdef double best = 0.0, acc, d
    for a in range(n - 1):
        for b in range(a + 1, n):
            acc = 0.0
            for c in range(m):
                d = pts[b, c] - pts[a, c]
                acc += d * d
            if acc > best:
                best = acc
    return sqrt(best)


def loop_residual(w, dw, coef, dP, double tau):
    cdef cnp.ndarray[double complex, ndim=2] W = np.ascontiguousarray(w, dtype=np.complex128)
    cdef cnp.ndarray[double complex, ndim=2] DW = np.ascontiguousarray(dw, dtype=np.complex128)
    cdef cnp.ndarray[double, ndim=2] CF = np.ascontiguousarray(coef, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] DP = np.ascontiguousarray(dP, dtype=np.float64)
    cdef Py_ssize_t m = W.shape[0], n = W.shape[1], i, j
    cdef cnp.ndarray[double complex, ndim=2] G = np.empty((m, n), dtype=np.complex128)
    cdef double sumsq = 0.0, re, im, scale
    for i in range(m):
        for j in range(n):
            scale = 2.0 * tau * CF[i, j] * DP[i, j]
            re = -DW[i, j].imag + scale * W[i, j].real
            im = DW[i, j].real + scale * W[i, j].imag
            G[i, j] = re + 1j * im
            sumsq += re * re + im * im
    return G, sumsq / n
