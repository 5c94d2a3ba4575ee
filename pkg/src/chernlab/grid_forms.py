"""Matrix-valued differential forms on grid-sampled products of circles and intervals.

Base manifolds are T^a x I^b.  A k-form is stored per strictly increasing
axis subset S as a complex array of shape ``grid.shape + (n, n)``; missing
subsets are implicit zeros, so a single object can hold a form of mixed
degree (Chern characters are sums over degrees).

Conventions, fixed once and used everywhere:

* derivatives are 2nd-order central differences (wrap-around on periodic
  axes) with 2nd-order one-sided stencils at interval endpoints, so that
  d(d(a)) = 0 holds to machine precision;
* quadrature is the trapezoidal rule on periodic axes and composite Simpson
  on interval axes (interval axes therefore need an odd point count);
* fiber integration moves the fiber axis to the first slot, which makes the
  projection formula  d(int_I a) + int_I(da) = ev_1^* a - ev_0^* a  hold
  with these exact signs.
"""

from __future__ import annotations

from dataclasses import dataclass
from bisect import bisect_left

import numpy as np

from ._backend import kernels

Subset = tuple[int, ...]


@dataclass(frozen=True)
class Axis:
    name: str
    size: int
    periodic: bool
    length: float = 1.0

    @property
    def spacing(self) -> float:
        # periodic axes sample [0, L); interval axes sample [0, L] inclusive
        return self.length / self.size if self.periodic else self.length / (self.size - 1)

    def coordinates(self) -> np.ndarray:
        return self.spacing * np.arange(self.size)


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    def __post_init__(self):
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names: {names}")
        for a in self.axes:
            if a.size < 4:
                raise ValueError(f"axis {a.name!r}: size {a.size} < 4")
            if a.length <= 0:
                raise ValueError(f"axis {a.name!r}: length must be positive")
            if not a.periodic and a.size % 2 == 0:
                raise ValueError(
                    f"axis {a.name!r}: interval axes need an odd point count for Simpson"
                )

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def axis_index(self, name: str) -> int:
        for i, a in enumerate(self.axes):
            if a.name == name:
                return i
        raise KeyError(f"no axis named {name!r}")

    def coordinate_mesh(self, name: str) -> np.ndarray:
        """Coordinate of the named axis broadcast over the full grid."""
        i = self.axis_index(name)
        c = self.axes[i].coordinates()
        shape = [1] * self.dim
        shape[i] = self.axes[i].size
        return np.broadcast_to(c.reshape(shape), self.shape)

    def drop_axis(self, index: int) -> "Grid":
        return Grid(self.axes[:index] + self.axes[index + 1:])

    def insert_axis(self, index: int, axis: Axis) -> "Grid":
        return Grid(self.axes[:index] + (axis,) + self.axes[index:])

    def quadrature_weights(self, index: int) -> np.ndarray:
        a = self.axes[index]
        h = a.spacing
        if a.periodic:
            return np.full(a.size, h)
        w = np.empty(a.size)
        w[0::2] = 2.0 * h / 3.0
        w[1::2] = 4.0 * h / 3.0
        w[0] = w[-1] = h / 3.0
        return w


def torus(*sizes: int, lengths=None, names=None) -> Grid:
    """All-periodic grid; default unit lengths and names x0, x1, ..."""
    n = len(sizes)
    lengths = lengths if lengths is not None else [1.0] * n
    names = names if names is not None else [f"x{i}" for i in range(n)]
    return Grid(tuple(Axis(names[i], sizes[i], True, lengths[i]) for i in range(n)))


class MatrixForm:
    """Differential form with n x n complex matrix coefficients on a Grid.

    ``components`` maps strictly increasing axis-index tuples to arrays of
    shape ``grid.shape + (n, n)``.  Scalar forms are the case n = 1.
    """

    def __init__(self, grid: Grid, matdim: int, components: dict[Subset, np.ndarray] | None = None):
        self.grid = grid
        self.matdim = matdim
        self.components: dict[Subset, np.ndarray] = {}
        if components:
            for key, arr in components.items():
                self.set_component(key, arr)

    # -- construction helpers ------------------------------------------------

    @classmethod
    def zero(cls, grid: Grid, matdim: int = 1) -> "MatrixForm":
        return cls(grid, matdim)

    @classmethod
    def constant(cls, grid: Grid, matrix: np.ndarray) -> "MatrixForm":
        matrix = np.asarray(matrix, dtype=np.complex128)
        form = cls(grid, matrix.shape[0])
        form.set_component((), np.broadcast_to(matrix, grid.shape + matrix.shape).copy())
        return form

    @classmethod
    def from_scalar(cls, grid: Grid, values: np.ndarray, subset: Subset = ()) -> "MatrixForm":
        form = cls(grid, 1)
        form.set_component(subset, np.asarray(values, dtype=np.complex128)[..., None, None])
        return form

    def set_component(self, key: Subset, arr: np.ndarray) -> None:
        key = tuple(key)
        if list(key) != sorted(set(key)):
            raise ValueError(f"component key must be strictly increasing, got {key}")
        if key and (key[0] < 0 or key[-1] >= self.grid.dim):
            raise ValueError(f"axis index out of range in {key}")
        arr = np.ascontiguousarray(arr, dtype=np.complex128)
        expected = self.grid.shape + (self.matdim, self.matdim)
        if arr.shape != expected:
            raise ValueError(f"component {key}: shape {arr.shape}, expected {expected}")
        self.components[key] = arr

    def component(self, key: Subset) -> np.ndarray:
        key = tuple(key)
        if key in self.components:
            return self.components[key]
        return np.zeros(self.grid.shape + (self.matdim, self.matdim), dtype=np.complex128)

    # -- structure -----------------------------------------------------------

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(sorted({len(k) for k in self.components}))

    @property
    def degree(self) -> int:
        degs = self.degrees
        if len(degs) > 1:
            raise ValueError(f"form has mixed degrees {degs}")
        return degs[0] if degs else 0

    def degree_part(self, k: int) -> "MatrixForm":
        return MatrixForm(self.grid, self.matdim,
                          {s: a for s, a in self.components.items() if len(s) == k})

    def is_zero(self) -> bool:
        return all(not arr.any() for arr in self.components.values())

    def copy(self) -> "MatrixForm":
        return MatrixForm(self.grid, self.matdim,
                          {k: v.copy() for k, v in self.components.items()})

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other: "MatrixForm") -> "MatrixForm":
        _check_compatible(self, other)
        out = self.copy()
        for key, arr in other.components.items():
            if key in out.components:
                out.components[key] = out.components[key] + arr
            else:
                out.components[key] = arr.copy()
        return out

    def __sub__(self, other: "MatrixForm") -> "MatrixForm":
        return self + (-1.0) * other

    def __rmul__(self, scalar) -> "MatrixForm":
        return MatrixForm(self.grid, self.matdim,
                          {k: scalar * v for k, v in self.components.items()})

    def __neg__(self) -> "MatrixForm":
        return (-1.0) * self

    # -- norms ---------------------------------------------------------------

    def norm(self) -> float:
        """Max over grid sites and components of the operator 2-norm."""
        best = 0.0
        for arr in self.components.values():
            if self.matdim == 1:
                m = float(np.abs(arr).max()) if arr.size else 0.0
            else:
                flat = arr.reshape(-1, self.matdim, self.matdim)
                m = float(np.linalg.svd(flat, compute_uv=False)[..., 0].max())
            best = max(best, m)
        return best

    def max_imag(self) -> float:
        return max((float(np.abs(arr.imag).max()) for arr in self.components.values()),
                   default=0.0)

    def real_scalar(self, key: Subset) -> np.ndarray:
        if self.matdim != 1:
            raise ValueError("real_scalar needs matdim 1")
        return self.component(key)[..., 0, 0].real


def _check_compatible(a: MatrixForm, b: MatrixForm) -> None:
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    if a.matdim != b.matdim:
        raise ValueError(f"matdim mismatch: {a.matdim} vs {b.matdim}")


def _merge_sign(s1: Subset, s2: Subset) -> tuple[Subset, int]:
    """Merge disjoint increasing tuples; sign of the sorting permutation."""
    merged = []
    sign = 1
    i = j = 0
    while i < len(s1) and j < len(s2):
        if s1[i] < s2[j]:
            merged.append(s1[i])
            i += 1
        else:
            # s2[j] jumps over the remaining len(s1) - i elements of s1
            if (len(s1) - i) % 2:
                sign = -sign
            merged.append(s2[j])
            j += 1
    merged.extend(s1[i:])
    merged.extend(s2[j:])
    return tuple(merged), sign


def wedge(a: MatrixForm, b: MatrixForm) -> MatrixForm:
    """Wedge product with matrix coefficient multiplication and shuffle signs."""
    _check_compatible(a, b)
    n = a.matdim
    out = MatrixForm(a.grid, n)
    nsites = int(np.prod(a.grid.shape)) if a.grid.dim else 1
    for s1, arr1 in a.components.items():
        flat1 = arr1.reshape(nsites, n, n)
        for s2, arr2 in b.components.items():
            if set(s1) & set(s2):
                continue
            if len(s1) + len(s2) > a.grid.dim:
                continue
            key, sign = _merge_sign(s1, s2)
            if key not in out.components:
                out.components[key] = np.zeros_like(arr1)
            kernels.matmul_acc(out.components[key].reshape(nsites, n, n),
                               flat1, arr2.reshape(nsites, n, n), complex(sign))
    return out


def wedge_trace(a: MatrixForm, b: MatrixForm, alpha: complex = 1.0,
                out: MatrixForm | None = None) -> MatrixForm:
    """Scalar form  alpha * tr(a ^ b)  without materializing the product."""
    _check_compatible(a, b)
    n = a.matdim
    if out is None:
        out = MatrixForm(a.grid, 1)
    nsites = int(np.prod(a.grid.shape)) if a.grid.dim else 1
    for s1, arr1 in a.components.items():
        flat1 = arr1.reshape(nsites, n, n)
        for s2, arr2 in b.components.items():
            if set(s1) & set(s2):
                continue
            if len(s1) + len(s2) > a.grid.dim:
                continue
            key, sign = _merge_sign(s1, s2)
            if key not in out.components:
                out.components[key] = np.zeros(a.grid.shape + (1, 1), dtype=np.complex128)
            kernels.trace_matmul_acc(out.components[key].reshape(nsites, 1),
                                     flat1, arr2.reshape(nsites, n, n),
                                     complex(alpha) * sign)
    return out


def _diff(arr: np.ndarray, axis_pos: int, axis: Axis) -> np.ndarray:
    """2nd-order derivative along one grid axis of a site array."""
    h = axis.spacing
    if axis.periodic:
        return (np.roll(arr, -1, axis=axis_pos) - np.roll(arr, 1, axis=axis_pos)) / (2.0 * h)
    out = np.empty_like(arr)
    sl = [slice(None)] * arr.ndim

    def at(i):
        s = list(sl)
        s[axis_pos] = i
        return tuple(s)

    out[at(slice(1, -1))] = (arr[at(slice(2, None))] - arr[at(slice(0, -2))]) / (2.0 * h)
    out[at(0)] = (-3.0 * arr[at(0)] + 4.0 * arr[at(1)] - arr[at(2)]) / (2.0 * h)
    out[at(-1)] = (3.0 * arr[at(-1)] - 4.0 * arr[at(-2)] + arr[at(-3)]) / (2.0 * h)
    return out


def exterior_d(a: MatrixForm, axes: tuple[int, ...] | None = None) -> MatrixForm:
    """Discrete exterior derivative (optionally restricted to a subset of axes)."""
    grid = a.grid
    which = range(grid.dim) if axes is None else axes
    out = MatrixForm(grid, a.matdim)
    for key, arr in a.components.items():
        for i in which:
            if i in key:
                continue
            pos = bisect_left(key, i)
            sign = -1.0 if pos % 2 else 1.0
            new_key = key[:pos] + (i,) + key[pos:]
            d = _diff(arr, i, grid.axes[i])
            if new_key in out.components:
                out.components[new_key] += sign * d
            else:
                out.components[new_key] = sign * d
    return out


def trace(a: MatrixForm) -> MatrixForm:
    """Fiberwise matrix trace; result has matdim 1."""
    out = MatrixForm(a.grid, 1)
    for key, arr in a.components.items():
        out.components[key] = np.ascontiguousarray(
            np.trace(arr, axis1=-2, axis2=-1)[..., None, None])
    return out


def integrate(a: MatrixForm) -> complex:
    """Integral of a top-degree scalar form over the whole grid."""
    if a.matdim != 1:
        raise ValueError("integrate needs matdim 1 (trace first)")
    grid = a.grid
    top = tuple(range(grid.dim))
    for key in a.components:
        if key != top and a.components[key].any():
            raise ValueError(f"integrate needs a top-degree form, found component {key}")
    arr = a.component(top)[..., 0, 0]
    for i in reversed(range(grid.dim)):
        arr = np.tensordot(arr, grid.quadrature_weights(i), axes=([i], [0]))
    return complex(arr)


def fiber_integrate(a: MatrixForm, axis: str) -> MatrixForm:
    """Integrate out one axis; the fiber axis is moved to the first slot.

    With this sign convention d(int_I a) + int_I(da) = ev_1^* a - ev_0^* a.
    """
    grid = a.grid
    i = grid.axis_index(axis)
    w = grid.quadrature_weights(i)
    new_grid = grid.drop_axis(i)
    out = MatrixForm(new_grid, a.matdim)
    wshape = [1] * (grid.dim + 2)
    wshape[i] = len(w)
    wview = w.reshape(wshape)
    for key, arr in a.components.items():
        if i not in key:
            continue
        pos = key.index(i)
        sign = -1.0 if pos % 2 else 1.0
        new_key = tuple(j if j < i else j - 1 for j in key if j != i)
        val = sign * (arr * wview).sum(axis=i)
        if new_key in out.components:
            out.components[new_key] += val
        else:
            out.components[new_key] = val
    return out


def evaluate_at(a: MatrixForm, axis: str, index: int) -> MatrixForm:
    """Pull back along the inclusion of one slice of the named axis.

    Components containing the axis restrict to zero; the rest are sliced.
    """
    grid = a.grid
    i = grid.axis_index(axis)
    new_grid = grid.drop_axis(i)
    out = MatrixForm(new_grid, a.matdim)
    for key, arr in a.components.items():
        if i in key:
            continue
        new_key = tuple(j if j < i else j - 1 for j in key)
        out.components[new_key] = np.ascontiguousarray(np.take(arr, index, axis=i))
    return out


def periods(a: MatrixForm) -> dict[tuple[str, ...], complex]:
    """Integrals over the coordinate subtori matching each component's degree.

    The period over the subtorus spanned by axes S is the integral of the
    S-component restricted to the slice through the origin of the remaining
    coordinates (slice-independent for closed forms up to O(h^2)).
    """
    if a.matdim != 1:
        raise ValueError("periods needs matdim 1")
    grid = a.grid
    out: dict[tuple[str, ...], complex] = {}
    for key, arr in a.components.items():
        if not key:
            continue
        for i in key:
            if not grid.axes[i].periodic:
                raise ValueError(f"axis {grid.axes[i].name!r} is an interval; "
                                 "periods are defined over subtori only")
        val = arr[..., 0, 0]
        # slice the complementary axes at index 0, then integrate over key
        for i in reversed(range(grid.dim)):
            if i in key:
                val = np.tensordot(val, grid.quadrature_weights(i), axes=([i], [0]))
            else:
                val = np.take(val, 0, axis=i)
        out[tuple(grid.axes[i].name for i in key)] = complex(val)
    return out


class ExactnessReport:
    def __init__(self, exact: bool, tol: float, d_norm: float, degree0_norm: float,
                 period_values: dict[tuple[str, ...], complex]):
        self.exact = exact
        self.tol = tol
        self.d_norm = d_norm
        self.degree0_norm = degree0_norm
        self.periods = period_values

    def __bool__(self) -> bool:
        return self.exact

    @property
    def max_period(self) -> float:
        return max((abs(v) for v in self.periods.values()), default=0.0)

    def __repr__(self):
        return (f"ExactnessReport(exact={self.exact}, d_norm={self.d_norm:.3e}, "
                f"max_period={self.max_period:.3e}, degree0={self.degree0_norm:.3e}, "
                f"tol={self.tol:.1e})")


def is_exact_on_torus(a: MatrixForm, tol: float) -> ExactnessReport:
    """Exactness test on an all-periodic grid: closed + all periods below tol.

    Degree-0 parts must vanish outright (a function is exact only if zero).
    """
    if any(not ax.periodic for ax in a.grid.axes):
        raise ValueError("exactness testing is only supported on all-periodic grids")
    d_norm = exterior_d(a).norm()
    deg0 = float(np.abs(a.component(())).max()) if () in a.components else 0.0
    pvals = periods(a)
    exact = d_norm <= tol and deg0 <= tol and all(abs(v) <= tol for v in pvals.values())
    return ExactnessReport(exact, tol, d_norm, deg0, pvals)
