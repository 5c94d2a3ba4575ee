"""Stabilized sums, shifts, orthocomplements, and the vanishing-CS homotopies.

Index conventions (global basis e_i, i in Z; window (p, q) stores the active
block C_p^q):

* shift s_k: window (p+k, q+k), data unchanged;
* direct sum, after equalizing both windows to (p, q): block-diagonal on
  window (2p, 2q), first block s_p(C_p^q), second s_q(C_p^q);
* shuffle sum: even global indices carry the first summand, odd the second;
  window (2p, 2q), so local position 2a carries slot a of the first factor
  and 2a+1 slot a of the second.

The two sums differ by conjugation with an explicit index permutation, and
the shuffle sum satisfies the interchange law with the direct sum exactly,
sitewise, which the based-loop identities rely on.
"""

from __future__ import annotations

import numpy as np

from ._linalg import dagger
from .fields import (PathChain, PathField, ProjectionField, UnitaryField, Window)
from .grid_forms import Axis, Grid


def shift(field, k: int):
    """s_k conjugation: reindex the window, keep the data."""
    w = Window(field.window.p + k, field.window.q + k)
    return type(field)(field.grid, w, field.data.copy())


def extend_window(field, p: int, q: int):
    """Filtration inclusion Id + field + (0 or Id) into a larger window."""
    old = field.window
    if p > old.p or q < old.q:
        raise ValueError(f"target window ({p}, {q}) does not contain ({old.p}, {old.q})")
    if (p, q) == (old.p, old.q):
        return field.copy()
    n = q - p
    lo = old.p - p
    hi = lo + old.dim
    data = np.zeros(field.grid.shape + (n, n), dtype=np.complex128)
    for j in range(lo):
        data[..., j, j] = 1.0  # below the old window: identity
    data[..., lo:hi, lo:hi] = field.data
    if isinstance(field, UnitaryField):
        for j in range(hi, n):
            data[..., j, j] = 1.0
    # projections: zero above the old window
    return type(field)(field.grid, Window(p, q), data)


def equalize_windows(a, b):
    p = min(a.window.p, b.window.p)
    q = max(a.window.q, b.window.q)
    return extend_window(a, p, q), extend_window(b, p, q)


def oplus(a, b):
    """Block sum after the stabilizing shifts: window (2p, 2q), diag(A, B)."""
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    if type(a) is not type(b):
        raise TypeError("block sum needs two fields of the same kind")
    a, b = equalize_windows(a, b)
    p, q = a.window.p, a.window.q
    m = q - p
    data = np.zeros(a.grid.shape + (2 * m, 2 * m), dtype=np.complex128)
    data[..., :m, :m] = a.data
    data[..., m:, m:] = b.data
    return type(a)(a.grid, Window(2 * p, 2 * q), data)


def boxplus(a, b):
    """Shuffle block sum: interleave the two summands on even/odd indices."""
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    if type(a) is not type(b):
        raise TypeError("block sum needs two fields of the same kind")
    a, b = equalize_windows(a, b)
    p, q = a.window.p, a.window.q
    m = q - p
    data = np.zeros(a.grid.shape + (2 * m, 2 * m), dtype=np.complex128)
    data[..., 0::2, 0::2] = a.data
    data[..., 1::2, 1::2] = b.data
    return type(a)(a.grid, Window(2 * p, 2 * q), data)


def boxplus_to_oplus_permutation(m: int) -> np.ndarray:
    """Index relabeling W with W (a boxplus b) W^{-1} = a oplus b.

    Local active indices run over [0, 2m); W sends the interleaved slot 2a
    to the direct-sum slot a, and 2a+1 to m+a.
    """
    perm = np.empty(2 * m, dtype=np.intp)
    perm[0::2] = np.arange(m)
    perm[1::2] = m + np.arange(m)
    return perm


def conjugate_by_permutation(field, perm: np.ndarray):
    """W field W^{-1} for the permutation sending slot j to perm[j] (exact)."""
    data = field.data[..., perm, :][..., :, perm]
    return type(field)(field.grid, field.window, np.ascontiguousarray(data))


def orthocomplement(p: ProjectionField) -> ProjectionField:
    """Additive inverse plot: window (-q, -p), active block Id - P."""
    w = p.window
    return ProjectionField(p.grid, Window(-w.q, -w.p),
                           np.ascontiguousarray(np.eye(w.dim) - p.data))


# ---------------------------------------------------------------------------
# homotopies with vanishing CS form
#
# All paths below are the [0, pi/2] rotation constructions reparametrized
# affinely to [0, 1]; CS is reparametrization invariant so the contracts are
# unaffected.


def _time_grid(grid: Grid, nt: int, name: str) -> tuple[Grid, int]:
    if nt % 2 == 0:
        raise ValueError("interval time axes need an odd point count")
    tname = name
    while tname in grid.names:
        tname += "_"
    product = Grid(grid.axes + (Axis(tname, nt, False, 1.0),))
    return product, product.axis_index(tname)


def _rotation_blocks(m: int, t: np.ndarray):
    """cos/sin profiles of the block rotation X(t) on C^m + C^m, t in [0,1]."""
    ang = 0.5 * np.pi * t
    return np.cos(ang), np.sin(ang)


def commute_homotopy(p: ProjectionField, q: ProjectionField, nt: int = 33) -> PathField:
    """Path from P + Q to Q + P through X(t) diag(A, B) X(t)^{-1}.

    The CS integrand trace vanishes pointwise (the rotation generator is
    block-off-diagonal while d of the conjugated field is block-diagonal),
    so the CS form is zero to roundoff, not just to O(h^2).
    """
    if p.grid != q.grid:
        raise ValueError("grid mismatch")
    p, q = equalize_windows(p, q)
    m = p.window.dim
    s0 = oplus(p, q)
    grid, ti = _time_grid(p.grid, nt, "t")
    tvals = np.linspace(0.0, 1.0, nt)
    c, s = _rotation_blocks(m, tvals)
    data = np.zeros(grid.shape + (2 * m, 2 * m), dtype=np.complex128)
    a = p.data
    b = q.data
    for j in range(nt):
        cj, sj = c[j], s[j]
        sl = (Ellipsis, j)
        blk = np.zeros(p.grid.shape + (2 * m, 2 * m), dtype=np.complex128)
        blk[..., :m, :m] = cj * cj * a + sj * sj * b
        blk[..., m:, m:] = sj * sj * a + cj * cj * b
        blk[..., :m, m:] = cj * sj * (b - a)
        blk[..., m:, :m] = cj * sj * (b - a)
        data[..., j, :, :] = blk
    field = ProjectionField(grid, s0.window, data)
    return PathField(field, grid.axes[ti].name)


def annihilate_homotopy(p: ProjectionField, nt: int = 33) -> PathField:
    """Path from P + P^perp to the basepoint projection I_0.

    Follows the explicit X(t) G X(t)^{-1} H construction on the symmetric
    window (p-q, q-p); S_t stays an exact projection for every t.
    """
    w = p.window
    m = w.dim
    a = p.data
    aperp = np.eye(m) - a
    grid, ti = _time_grid(p.grid, nt, "t")
    tvals = np.linspace(0.0, 1.0, nt)
    c, s = _rotation_blocks(m, tvals)
    data = np.zeros(grid.shape + (2 * m, 2 * m), dtype=np.complex128)
    for j in range(nt):
        cj, sj = c[j], s[j]
        blk = np.zeros(p.grid.shape + (2 * m, 2 * m), dtype=np.complex128)
        blk[..., :m, :m] = a + sj * sj * aperp
        blk[..., :m, m:] = cj * sj * aperp
        blk[..., m:, :m] = cj * sj * aperp
        blk[..., m:, m:] = cj * cj * aperp
        data[..., j, :, :] = blk
    field = ProjectionField(grid, Window(w.p - w.q, w.q - w.p), data)
    return PathField(field, grid.axes[ti].name)


def transposition_homotopy(p: ProjectionField, k: int, nt: int = 33) -> PathField:
    """Rotation in the (e_k, e_{k+1}) plane carrying P to its conjugate by the
    signed transposition (e_k -> -e_{k+1}, e_{k+1} -> e_k)."""
    w = p.window
    if not (w.p <= k and k + 1 < w.q):
        raise ValueError(f"indices {k}, {k + 1} outside window ({w.p}, {w.q})")
    a = w.local_index(k)
    m = w.dim
    grid, ti = _time_grid(p.grid, nt, "t")
    tvals = np.linspace(0.0, 1.0, nt)
    c, s = _rotation_blocks(1, tvals)
    data = np.zeros(grid.shape + (m, m), dtype=np.complex128)
    for j in range(nt):
        x = np.eye(m, dtype=np.complex128)
        x[a, a] = c[j]
        x[a, a + 1] = s[j]
        x[a + 1, a] = -s[j]
        x[a + 1, a + 1] = c[j]
        data[..., j, :, :] = x @ p.data @ x.T.conj()
    field = ProjectionField(grid, w, data)
    return PathField(field, grid.axes[ti].name)


def gamma_g(g: UnitaryField, nt: int = 33) -> PathField:
    """Null-homotopy of g + g^{-1}: the path G X(t) H X(t)^{-1} from
    g + g^{-1} at t = 0 to the identity at t = 1, with vanishing CS form.

    In m x m blocks:  [[c^2 g + s^2,  cs (1 - g)], [cs (g^{-1} - 1),  s^2 + c^2 g^{-1}]].
    """
    m = g.window.dim
    grid, ti = _time_grid(g.grid, nt, "t")
    tvals = np.linspace(0.0, 1.0, nt)
    c, s = _rotation_blocks(m, tvals)
    gd = g.data
    gi = dagger(gd)
    eye = np.eye(m, dtype=np.complex128)
    data = np.zeros(grid.shape + (2 * m, 2 * m), dtype=np.complex128)
    for j in range(nt):
        cj, sj = c[j], s[j]
        data[..., j, :m, :m] = cj * cj * gd + sj * sj * eye
        data[..., j, :m, m:] = cj * sj * (eye - gd)
        data[..., j, m:, :m] = cj * sj * (gi - eye)
        data[..., j, m:, m:] = sj * sj * eye + cj * cj * gi
    w = g.window
    field = UnitaryField(grid, Window(2 * w.p, 2 * w.q), data)
    return PathField(field, grid.axes[ti].name)


def _loop_to_interval(loop: PathField) -> PathField:
    """Re-sample a periodic-axis loop onto a closed interval [0, 1] with the
    wrap slice appended, so it can be used as a chain segment."""
    field = loop.field
    ti = loop.time_index
    n = loop.time_size
    if not loop.periodic_time:
        if not loop.is_loop():
            raise ValueError("path is not a loop")
        return loop
    first = np.take(field.data, [0], axis=ti)
    data = np.concatenate([field.data, first], axis=ti)
    old = loop.grid.axes[ti]
    axis = Axis(old.name, n + 1, False, 1.0)
    grid = loop.grid.drop_axis(ti).insert_axis(ti, axis)
    return PathField(type(field)(grid, field.window, np.ascontiguousarray(data)),
                     old.name)


def based_loop(g_t: PathField) -> PathChain:
    """Based loop associated to a free loop of unitaries.

    Three segments in time order: the reverse of gamma_{g_0} (from the
    identity to g_0 + g_0^{-1}), the loop g_t + g_0^{-1}, and gamma_{g_0}
    back to the identity.  CS over the chain is the per-segment sum, so the
    two gamma contributions cancel exactly and CS of the based loop equals
    CS of the free loop.
    """
    if not isinstance(g_t.field, UnitaryField):
        raise TypeError("based_loop needs a loop of unitaries")
    if not g_t.is_loop():
        raise ValueError("input path is not a loop")
    interval = _loop_to_interval(g_t)
    g0 = g_t.ev(0)
    nt = interval.time_size
    gamma = gamma_g(g0, nt=nt)
    # middle segment: g_t + g_0^{-1}, the inverse held constant along the loop
    ti = interval.time_index
    g0inv = dagger(g0.data)
    shape = list(interval.field.data.shape)
    const_data = np.broadcast_to(
        np.expand_dims(g0inv, axis=ti), shape).copy()
    const_path = UnitaryField(interval.grid, interval.field.window, const_data)
    middle = PathField(oplus(interval.field, const_path), interval.time_axis)
    return PathChain([gamma.reverse(), middle, gamma])