"""Pure-NumPy fallback for the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def matmul_acc(out, a, b, alpha):
    """out[s] += alpha * a[s] @ b[s] for every site s."""
    out += alpha * np.matmul(a, b)


def trace_matmul_acc(out, a, b, alpha):
    """out[s, 0] += alpha * tr(a[s] @ b[s]) for every site s."""
    out[:, 0] += alpha * np.einsum("sik,ski->s", a, b)


def trace_acc(out, a, alpha):
    """out[s, 0] += alpha * tr(a[s]) for every site s."""
    out[:, 0] += alpha * np.einsum("sii->s", a)
