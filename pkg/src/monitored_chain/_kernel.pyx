# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Kraus-step kernel.

Same contract as ``_kernel_py.advance``; loops over trajectories with the
GIL released so callers may run batches on several threads.
"""
import numpy as np

from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport zgemm

cdef double TRACE_FLOOR = 1e-12


cdef inline void _sandwich_blas(double complex* U,
                                double complex* A,
                                double complex* tmp,
                                double complex* out,
                                double scale,
                                int L) noexcept nogil:
    # row-major X is X^T to Fortran: tmp^T = A^T U^T, out^T = conj(U) tmp^T
    cdef char n = b'N'
    cdef char c = b'C'
    cdef double complex one = 1.0
    cdef double complex zero = 0.0
    cdef double complex alpha = scale
    cdef int i, j
    zgemm(&n, &n, &L, &L, &L, &one, A, &L, U, &L, &zero, tmp, &L)
    zgemm(&c, &n, &L, &L, &L, &alpha, U, &L, tmp, &L, &zero, out, &L)
    for i in range(L):
        out[i * L + i] = out[i * L + i].real
        for j in range(i + 1, L):
            out[j * L + i] = 0.5 * (out[j * L + i] + out[i * L + j].conjugate())
            out[i * L + j] = out[j * L + i].conjugate()


cdef inline void _sandwich(double complex[:, ::1] U,
                           double complex[:, ::1] A,
                           double complex[:, ::1] tmp,
                           double complex[:, ::1] out,
                           double scale,
                           Py_ssize_t L) noexcept nogil:
    # out = U A U^dag * scale, A Hermitian; upper triangle computed then mirrored
    cdef Py_ssize_t i, j, l
    cdef double complex acc
    for i in range(L):
        for j in range(L):
            acc = 0
            for l in range(L):
                acc = acc + U[i, l] * A[l, j]
            tmp[i, j] = acc
    for i in range(L):
        for j in range(i, L):
            acc = 0
            for l in range(L):
                acc = acc + tmp[i, l] * U[j, l].conjugate()
            acc = acc * scale
            if i == j:
                out[i, i] = acc.real
            else:
                out[i, j] = acc
                out[j, i] = acc.conjugate()


def advance(double complex[:, :, ::1] states,
            double complex[:, ::1] U,
            double k, double eta, double dt,
            const double[:, :, :] dW):
    cdef Py_ssize_t B = states.shape[0]
    cdef Py_ssize_t L = states.shape[1]
    cdef Py_ssize_t n = dW.shape[1]
    cdef Py_ssize_t b, s, i, j
    cdef double sk = sqrt(eta * k)
    cdef double c0 = 1.0 - 0.5 * k * dt
    cdef double c_deph = (1.0 - eta) * k * dt
    cdef double half_ek = 0.5 * eta * k
    cdef double w, tr, d
    cdef bint use_blas = L > 4

    status_arr = np.full(B, -1, dtype=np.int64)
    cdef long long[::1] status = status_arr
    cdef double complex[:, ::1] sigma = np.empty((L, L), dtype=np.complex128)
    cdef double complex[:, ::1] tmp = np.empty((L, L), dtype=np.complex128)
    cdef double[::1] m = np.empty(L, dtype=np.float64)
    cdef double complex[:, ::1] rho

    with nogil:
        for b in range(B):
            rho = states[b]
            for s in range(n):
                for i in range(L):
                    w = dW[b, s, i]
                    m[i] = c0 + sk * (2.0 * sk * rho[i, i].real * dt + w) + half_ek * (w * w - dt)
                if use_blas:
                    _sandwich_blas(&U[0, 0], &rho[0, 0], &tmp[0, 0], &sigma[0, 0], 1.0, <int>L)
                else:
                    _sandwich(U, rho, tmp, sigma, 1.0, L)
                tr = 0.0
                for i in range(L):
                    d = sigma[i, i].real
                    for j in range(L):
                        sigma[i, j] = sigma[i, j] * (m[i] * m[j])
                    sigma[i, i] = m[i] * m[i] * d + c_deph * d
                    tr = tr + sigma[i, i].real
                if not tr > TRACE_FLOOR:
                    status[b] = s
                    break
                if use_blas:
                    _sandwich_blas(&U[0, 0], &sigma[0, 0], &tmp[0, 0], &rho[0, 0], 1.0 / tr, <int>L)
                else:
                    _sandwich(U, sigma, tmp, rho, 1.0 / tr, L)
    return status_arr
