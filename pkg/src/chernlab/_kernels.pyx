# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: batched small-matrix products over grid sites.

Matrix-valued form coefficients are stored as (sites, n, n) complex blocks
with small n (the active window dimension, typically 1..8).  For such sizes
the per-call dispatch overhead of stacked NumPy matmul dominates, so the
wedge/trace inner loops are hand-rolled here.  Signatures mirror
``_kernels_np`` exactly; ``_backend`` picks whichever import succeeds.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def matmul_acc(cnp.complex128_t[:, :, ::1] out,
               cnp.complex128_t[:, :, ::1] a,
               cnp.complex128_t[:, :, ::1] b,
               double complex alpha):
    """out[s] += alpha * a[s] @ b[s] for every site s."""
    cdef Py_ssize_t nsites = out.shape[0]
    cdef Py_ssize_t n = out.shape[1]
    cdef Py_ssize_t s, i, j, k
    cdef double complex acc
    if a.shape[0] != nsites or b.shape[0] != nsites:
        raise ValueError("site count mismatch")
    if a.shape[1] != n or b.shape[1] != n or a.shape[2] != n or b.shape[2] != n:
        raise ValueError("matrix dimension mismatch")
    for s in range(nsites):
        for i in range(n):
            for j in range(n):
                acc = 0
                for k in range(n):
                    acc = acc + a[s, i, k] * b[s, k, j]
                out[s, i, j] = out[s, i, j] + alpha * acc
    return None


def trace_matmul_acc(cnp.complex128_t[:, ::1] out,
                     cnp.complex128_t[:, :, ::1] a,
                     cnp.complex128_t[:, :, ::1] b,
                     double complex alpha):
    """out[s, 0] += alpha * tr(a[s] @ b[s]) for every site s."""
    cdef Py_ssize_t nsites = out.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t s, i, k
    cdef double complex acc
    if a.shape[0] != nsites or b.shape[0] != nsites:
        raise ValueError("site count mismatch")
    if b.shape[1] != n or a.shape[2] != n or b.shape[2] != n:
        raise ValueError("matrix dimension mismatch")
    for s in range(nsites):
        acc = 0
        for i in range(n):
            for k in range(n):
                acc = acc + a[s, i, k] * b[s, k, i]
        out[s, 0] = out[s, 0] + alpha * acc
    return None


def trace_acc(cnp.complex128_t[:, ::1] out,
              cnp.complex128_t[:, :, ::1] a,
              double complex alpha):
    """out[s, 0] += alpha * tr(a[s]) for every site s."""
    cdef Py_ssize_t nsites = out.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t s, i
    cdef double complex acc
    if a.shape[0] != nsites:
        raise ValueError("site count mismatch")
    for s in range(nsites):
        acc = 0
        for i in range(n):
            acc = acc + a[s, i, i]
        out[s, 0] = out[s, 0] + alpha * acc
    return None
