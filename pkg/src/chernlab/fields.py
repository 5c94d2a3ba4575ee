"""Windowed (stabilized) unitary, projection, and connection fields.

A Window (p, q) fixes the active block C_p^q of the standard filtration:
operators are the identity below index p; above index q they are the
identity (unitaries) or zero (projections).  Only the active block is
stored, as a per-site (q-p) x (q-p) complex matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg
from .grid_forms import Axis, Grid, MatrixForm, exterior_d

UNITARITY_TOL = 1e-10
IDEMPOTENCY_TOL = 1e-10
HERMITICITY_TOL = 1e-12
LOOP_TOL = 1e-10
RANK_EIGENVALUE_THRESHOLD = 0.5
MIN_SPECTRAL_GAP = 0.2


@dataclass(frozen=True)
class Window:
    p: int
    q: int

    def __post_init__(self):
        if self.q - self.p < 1:
            raise ValueError(f"window ({self.p}, {self.q}) has no active block")

    @property
    def dim(self) -> int:
        return self.q - self.p

    def local_index(self, global_index: int) -> int:
        if not self.p <= global_index < self.q:
            raise ValueError(f"index {global_index} outside window ({self.p}, {self.q})")
        return global_index - self.p


class _WindowedField:
    """Per-site matrix data on the active block of a window."""

    kind = "field"

    def __init__(self, grid: Grid, window: Window, data: np.ndarray):
        data = np.ascontiguousarray(data, dtype=np.complex128)
        expected = grid.shape + (window.dim, window.dim)
        if data.shape != expected:
            raise ValueError(f"data shape {data.shape}, expected {expected}")
        self.grid = grid
        self.window = window
        self.data = data

    @property
    def matdim(self) -> int:
        return self.window.dim

    def as_form(self) -> MatrixForm:
        form = MatrixForm(self.grid, self.matdim)
        form.set_component((), self.data)
        return form

    def site_norm(self, other=None) -> float:
        diff = self.data if other is None else self.data - other.data
        return float(np.linalg.svd(diff.reshape(-1, self.matdim, self.matdim),
                                   compute_uv=False)[..., 0].max())

    def copy(self):
        return type(self)(self.grid, self.window, self.data.copy())


class UnitaryField(_WindowedField):
    kind = "unitary"

    def unitarity_residual(self) -> float:
        g = self.data
        r = _linalg.dagger(g) @ g - np.eye(self.matdim)
        return float(np.abs(r).max())

    def inverse(self) -> "UnitaryField":
        return UnitaryField(self.grid, self.window, _linalg.dagger(self.data))

    def determinant(self) -> np.ndarray:
        return np.linalg.det(self.data)


class ProjectionField(_WindowedField):
    kind = "projection"

    def idempotency_residual(self) -> float:
        p = self.data
        return float(np.abs(p @ p - p).max())

    def hermiticity_residual(self) -> float:
        return float(np.abs(self.data - _linalg.dagger(self.data)).max())

    def active_rank(self) -> int:
        """Per-site eigenvalue count above 0.5; must be constant on the grid."""
        w = np.linalg.eigvalsh(self.data)
        counts = (w > RANK_EIGENVALUE_THRESHOLD).sum(axis=-1)
        cmin, cmax = int(counts.min()), int(counts.max())
        if cmin != cmax:
            raise ValueError(f"active rank varies across sites ({cmin}..{cmax}); "
                             "not a valid plot")
        return cmin


class ConnectionField:
    """Connection 1-form in the fixed trivialization of the window block."""

    kind = "connection"

    def __init__(self, grid: Grid, window: Window, alpha: MatrixForm,
                 subbundle: ProjectionField | None = None):
        if alpha.grid != grid or alpha.matdim != window.dim:
            raise ValueError("connection form does not match grid/window")
        if any(len(k) != 1 for k in alpha.components):
            raise ValueError("connection form must be a 1-form")
        self.grid = grid
        self.window = window
        self.alpha = alpha
        self.subbundle = subbundle

    @property
    def matdim(self) -> int:
        return self.window.dim

    def time_generator(self, axis: str) -> np.ndarray:
        """The dt-component A(d/dt) as per-site matrices (zero if absent)."""
        i = self.grid.axis_index(axis)
        return self.alpha.component((i,))

    def base_slice(self, axis: str, index: int) -> MatrixForm:
        """Spatial part of the connection restricted to one time slice."""
        from .grid_forms import evaluate_at
        return evaluate_at(self.alpha, axis, index)


def rank(field: ProjectionField) -> int:
    """Stabilized rank p + dim(active image); constant across the grid."""
    return field.window.p + field.active_rank()


class PathField:
    """A field whose grid has a distinguished time axis (interval or loop)."""

    def __init__(self, field, time_axis: str):
        field.grid.axis_index(time_axis)  # existence check
        self.field = field
        self.time_axis = time_axis

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def base_grid(self) -> Grid:
        return self.grid.drop_axis(self.time_index)

    @property
    def time_index(self) -> int:
        return self.grid.axis_index(self.time_axis)

    @property
    def time_size(self) -> int:
        return self.grid.axes[self.time_index].size

    @property
    def periodic_time(self) -> bool:
        return self.grid.axes[self.time_index].periodic

    def ev(self, index: int):
        """Slice field at one time node."""
        data = np.take(self.field.data, index, axis=self.time_index)
        return type(self.field)(self.base_grid, self.field.window,
                                np.ascontiguousarray(data))

    def is_loop(self, tol: float = LOOP_TOL) -> bool:
        if self.periodic_time:
            return True
        first = np.take(self.field.data, 0, axis=self.time_index)
        last = np.take(self.field.data, -1, axis=self.time_index)
        return bool(np.abs(first - last).max() <= tol)

    def reverse(self) -> "PathField":
        data = np.flip(self.field.data, axis=self.time_index)
        return PathField(type(self.field)(self.grid, self.field.window,
                                          np.ascontiguousarray(data)), self.time_axis)


class PathChain:
    """Concatenated path segments sharing endpoint slices.

    CS forms of a concatenation are summed per segment, which is exactly
    additive and sidesteps junction smoothing.
    """

    def __init__(self, segments: list[PathField]):
        if not segments:
            raise ValueError("empty chain")
        self.segments = segments

    def reverse(self) -> "PathChain":
        return PathChain([seg.reverse() for seg in reversed(self.segments)])


# ---------------------------------------------------------------------------
# canonical generators


def winding_unitary(grid: Grid, m: list[int], window: Window,
                    axis: str | None = None) -> UnitaryField:
    """Diagonal field diag(e^{2 pi i m_j x / L}) along a circle axis."""
    if axis is None:
        axis = next(a.name for a in grid.axes if a.periodic)
    ax = grid.axes[grid.axis_index(axis)]
    if not ax.periodic:
        raise ValueError(f"axis {axis!r} is not a circle")
    if len(m) > window.dim:
        raise ValueError(f"window too small for {len(m)} winding entries")
    x = grid.coordinate_mesh(axis) / ax.length
    data = np.zeros(grid.shape + (window.dim, window.dim), dtype=np.complex128)
    for j in range(window.dim):
        data[..., j, j] = np.exp(2j * np.pi * m[j] * x) if j < len(m) else 1.0
    return UnitaryField(grid, window, data)


_PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]],
                  dtype=np.complex128)

# Orientation convention for the Bloch generator, fixed once: with
# P = (1 + n.sigma)/2 and the winding map below, the degree-2 Chern integral
# of bloch_projection(grid, d) equals BLOCH_CHERN_SIGN * d.
BLOCH_CHERN_SIGN = -1


def bloch_unit_vectors(grid: Grid, d: int) -> np.ndarray:
    """Unit-vector family n: T^2 -> S^2 of mapping degree +/- d.

    A two-band winding map with mass term m = 1, which keeps |n| bounded
    away from zero for every d.
    """
    if grid.dim != 2:
        raise ValueError("bloch generator needs a 2-torus grid")
    u = 2.0 * np.pi * grid.coordinate_mesh(grid.names[0]) / grid.axes[0].length
    v = 2.0 * np.pi * grid.coordinate_mesh(grid.names[1]) / grid.axes[1].length
    if d == 0:
        n = np.zeros(grid.shape + (3,))
        n[..., 2] = 1.0
        return n
    n = np.stack([np.sin(d * u), np.sin(v), 1.0 - np.cos(d * u) - np.cos(v)], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def bloch_projection(grid: Grid, d: int, window: Window = Window(0, 2)) -> ProjectionField:
    """Rank-1 projection P = (1 + n.sigma)/2 for the degree-d family above."""
    if window.dim != 2:
        raise ValueError("bloch projection needs a 2-dimensional active block")
    n = bloch_unit_vectors(grid, d)
    data = 0.5 * (np.eye(2, dtype=np.complex128)
                  + np.einsum("...k,kij->...ij", n, _PAULI))
    return ProjectionField(grid, window, np.ascontiguousarray(data))


def solid_angle_degree(n: np.ndarray, grid: Grid) -> float:
    """Independent degree oracle: (1/4 pi) int n . (d_x n x d_y n) dx dy.

    Central differences on the sampled unit vectors and the trapezoidal
    rule; shares no code with the Chern form machinery.
    """
    hx = grid.axes[0].spacing
    hy = grid.axes[1].spacing
    dxn = (np.roll(n, -1, axis=0) - np.roll(n, 1, axis=0)) / (2 * hx)
    dyn = (np.roll(n, -1, axis=1) - np.roll(n, 1, axis=1)) / (2 * hy)
    integrand = np.einsum("...k,...k->...", n, np.cross(dxn, dyn))
    return float(integrand.sum() * hx * hy / (4 * np.pi))


def paper_example_grid(size: int = 32) -> Grid:
    """T^3 x S^1 with coordinates (p, q, s, t), all lengths 2 pi."""
    return Grid(tuple(Axis(name, size, True, 2 * np.pi) for name in "pqst"))


def paper_example_connection(grid: Grid, f_amp: float = 1.0,
                             g_amp: float = 1.0) -> ConnectionField:
    """Rank-1 connection i(f_amp cos(p) dq + g_amp sin(s) dt) on T^3 x S^1."""
    if grid.dim != 4 or grid.names != ("p", "q", "s", "t"):
        raise ValueError("expected axes (p, q, s, t); use paper_example_grid()")
    window = Window(0, 1)
    alpha = MatrixForm(grid, 1)
    cp = np.cos(grid.coordinate_mesh("p"))
    ss = np.sin(grid.coordinate_mesh("s"))
    alpha.set_component((grid.axis_index("q"),), (1j * f_amp * cp)[..., None, None])
    alpha.set_component((grid.axis_index("t"),), (1j * g_amp * ss)[..., None, None])
    return ConnectionField(grid, window, alpha)


def su2_bump_unitary(grid: Grid, d: int, window: Window = Window(0, 2)) -> UnitaryField:
    """SU(2)-valued map on T^3 of mapping degree d, built from |d| bump-localized
    wraps (hedgehogs) at distinct centers; degree flips sign with d."""
    if grid.dim != 3:
        raise ValueError("needs a 3-torus grid")
    if window.dim != 2:
        raise ValueError("needs a 2-dimensional active block")
    data = np.zeros(grid.shape + (2, 2), dtype=np.complex128)
    data[..., 0, 0] = 1.0
    data[..., 1, 1] = 1.0
    if d == 0:
        return UnitaryField(grid, window, data)
    coords = [grid.coordinate_mesh(nm) / grid.axes[i].length
              for i, nm in enumerate(grid.names)]  # normalized to [0, 1)
    # centers on the body diagonal; nearest-image center distance sqrt(3)/|d|
    radius = min(0.46, 0.45 * np.sqrt(3.0) / abs(d))
    for b in range(abs(d)):
        center = (b + 0.5) / abs(d)
        delta = [((c - center + 0.5) % 1.0) - 0.5 for c in coords]
        r = np.sqrt(sum(dl * dl for dl in delta))
        # profile pi -> 0 over the bump: linear at the center (the hedgehog
        # with theta'(0) = 0 is only C^1 there) and 4th-order contact at the rim
        u = np.clip(r / radius, 0.0, 1.0)
        theta = np.pi * (1.0 - u) ** 4 * (1.0 + 3.0 * u + 6.0 * u * u + 10.0 * u ** 3)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.stack([np.where(r > 0, dl / np.where(r > 0, r, 1.0), 0.0)
                             for dl in delta], axis=-1)
        sign = 1.0 if d > 0 else -1.0
        axis_vec = unit * np.sin(theta)[..., None]
        block = (np.cos(theta)[..., None, None] * np.eye(2)
                 + 1j * sign * np.einsum("...k,kij->...ij", axis_vec, _PAULI))
        data = data @ block
    return UnitaryField(grid, window, np.ascontiguousarray(data))


def su2_degree_oracle(g: UnitaryField, samples: int = 24) -> int:
    """Mapping-degree oracle by regular-value preimage counting.

    Views the SU(2) field as a map to S^3 (unit quaternions), locates
    preimages of a fixed regular value by local minimization of the chordal
    distance on the grid, and sums Jacobian orientation signs there.
    """
    a = g.data[..., 0, 0]
    b = g.data[..., 1, 0]
    quat = np.stack([a.real, a.imag, b.real, b.imag], axis=-1)
    target = np.array([np.cos(1.0), np.sin(1.0) * 0.6, np.sin(1.0) * 0.64, np.sin(1.0) * 0.48])
    target /= np.linalg.norm(target)
    dist = np.linalg.norm(quat - target, axis=-1)
    total = 0
    visited = np.zeros(dist.shape, dtype=bool)
    flat_order = np.argsort(dist, axis=None)
    shape = dist.shape
    for flat in flat_order[:samples]:
        idx = np.unravel_index(flat, shape)
        if dist[idx] > 0.5 or visited[idx]:
            continue
        # blank out a neighborhood so each preimage is counted once
        sl = tuple(slice(max(0, i - 4), i + 5) for i in idx)
        if visited[sl].any():
            continue
        visited[sl] = True
        # orientation: project the three coordinate derivatives onto the
        # tangent space at the target and take the sign of their volume
        basis = _tangent_basis(target)
        cols = []
        for ax in range(3):
            fwd = quat[tuple((i + 1) % shape[ax_] if ax_ == ax else i
                             for ax_, i in enumerate(idx))]
            bwd = quat[tuple((i - 1) % shape[ax_] if ax_ == ax else i
                             for ax_, i in enumerate(idx))]
            cols.append(basis @ (fwd - bwd))
        det = float(np.linalg.det(np.stack(cols, axis=-1)))
        total += 1 if det > 0 else -1
    return total


def _tangent_basis(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space of S^3 at v, rows of a (3,4) array."""
    basis = []
    for e in np.eye(4):
        w = e - np.dot(e, v) * v
        for prev in basis:
            w = w - np.dot(w, prev) * prev
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            basis.append(w / norm)
        if len(basis) == 3:
            break
    return np.stack(basis)


# ---------------------------------------------------------------------------
# random smooth fields


def _bandlimited(rng: np.random.Generator, grid: Grid, matdim: int,
                 bandwidth: int, amplitude: float) -> np.ndarray:
    """Truncated-Fourier random matrix field, smooth and periodic per axis."""
    out = np.zeros(grid.shape + (matdim, matdim), dtype=np.complex128)
    modes = [range(-bandwidth, bandwidth + 1)] * grid.dim
    coords = [grid.coordinate_mesh(nm) / grid.axes[i].length
              for i, nm in enumerate(grid.names)]
    import itertools
    for k in itertools.product(*modes):
        decay = np.exp(-0.7 * sum(abs(kk) for kk in k))
        coef = (rng.standard_normal((matdim, matdim))
                + 1j * rng.standard_normal((matdim, matdim))) * decay
        phase = sum(kk * c for kk, c in zip(k, coords))
        out += np.exp(2j * np.pi * phase)[..., None, None] * coef
    # normalize by the worst operator norm so constraint projections
    # (polar factor, spectral rounding) stay well conditioned
    scale = float(np.linalg.svd(out.reshape(-1, matdim, matdim),
                                compute_uv=False)[..., 0].max())
    return amplitude * out / scale if scale > 0 else out


def random_smooth_field(kind: str, grid: Grid, window: Window, seed: int,
                        bandwidth: int = 1, rank_target: int | None = None,
                        real: bool = False, max_retries: int = 8):
    """Deterministic seeded smooth field, projected to the constraint set.

    unitary: polar decomposition of a perturbed identity;
    projection: spectral rounding of a Hermitian field to the top-``rank_target``
    eigenspace, retrying seeds until the spectral gap is at least 0.2.
    """
    n = window.dim
    if kind == "unitary":
        rng = np.random.default_rng(seed)
        m = _bandlimited(rng, grid, n, bandwidth, 0.6)
        if real:
            m = m.real.astype(np.complex128)
        g = _linalg.polar_unitary(np.eye(n) + m)
        return UnitaryField(grid, window, np.ascontiguousarray(g))
    if kind == "projection":
        if rank_target is None:
            rank_target = (n + 1) // 2
        for attempt in range(max_retries):
            rng = np.random.default_rng(seed + 1000 * attempt)
            base = np.zeros((n, n), dtype=np.complex128)
            base[:rank_target, :rank_target] = np.eye(rank_target)
            m = _bandlimited(rng, grid, n, bandwidth, 0.35)
            h = base + 0.5 * (m + _linalg.dagger(m))
            if real:
                h = h.real.astype(np.complex128)
            p, gap = _linalg.spectral_round_projection(h, rank_target)
            if gap >= MIN_SPECTRAL_GAP:
                return ProjectionField(grid, window, np.ascontiguousarray(p))
        raise RuntimeError(f"no spectral gap >= {MIN_SPECTRAL_GAP} after "
                           f"{max_retries} retries (seed {seed})")
    raise ValueError(f"unknown kind {kind!r}")


def seeded_phase_unitary(grid: Grid, window: Window, seed: int,
                         max_winding: int = 2) -> UnitaryField:
    """Random phase field in a constant frame: V diag(e^{i phi_j}) V^dagger
    with affine-in-coordinates phases.

    Stencil derivatives of such fields are exact up to a common scalar
    factor per axis, which is what makes the vanishing-CS homotopies vanish
    to roundoff rather than to O(h^2).
    """
    n = window.dim
    rng = np.random.default_rng(seed)
    m = rng.integers(-max_winding, max_winding + 1, size=(n, grid.dim))
    offsets = rng.uniform(0, 2 * np.pi, size=n)
    coords = [grid.coordinate_mesh(nm) / grid.axes[i].length
              for i, nm in enumerate(grid.names)]
    phases = np.zeros(grid.shape + (n,))
    for j in range(n):
        phases[..., j] = offsets[j] + 2 * np.pi * sum(
            m[j, i] * coords[i] for i in range(grid.dim))
    diag = np.exp(1j * phases)
    frame = _linalg.polar_unitary(rng.standard_normal((n, n))
                                  + 1j * rng.standard_normal((n, n)))
    data = np.einsum("ab,...b,cb->...ac", frame, diag, frame.conj())
    return UnitaryField(grid, window, np.ascontiguousarray(data))


# ---------------------------------------------------------------------------
# validation


class ValidationReport:
    def __init__(self, kind: str, residuals: dict[str, float], tolerances: dict[str, float]):
        self.kind = kind
        self.residuals = residuals
        self.tolerances = tolerances

    @property
    def ok(self) -> bool:
        return all(self.residuals[k] <= self.tolerances[k] for k in self.residuals)

    def __bool__(self):
        return self.ok

    def __repr__(self):
        rows = ", ".join(f"{k}={v:.2e}" for k, v in self.residuals.items())
        return f"ValidationReport({self.kind}: {rows}, ok={self.ok})"


def validate(field) -> ValidationReport:
    """Report the max residuals of all type invariants."""
    if isinstance(field, PathField):
        rep = validate(field.field)
        if not field.periodic_time:
            first = np.take(field.field.data, 0, axis=field.time_index)
            last = np.take(field.field.data, -1, axis=field.time_index)
            rep.residuals["loop_closure"] = float(np.abs(first - last).max())
            rep.tolerances["loop_closure"] = LOOP_TOL
        return rep
    if isinstance(field, UnitaryField):
        return ValidationReport("unitary",
                                {"unitarity": field.unitarity_residual()},
                                {"unitarity": UNITARITY_TOL})
    if isinstance(field, ProjectionField):
        res = {"idempotency": field.idempotency_residual(),
               "hermiticity": field.hermiticity_residual()}
        tol = {"idempotency": IDEMPOTENCY_TOL, "hermiticity": HERMITICITY_TOL}
        try:
            field.active_rank()
            res["rank_constancy"] = 0.0
        except ValueError:
            res["rank_constancy"] = 1.0
        tol["rank_constancy"] = 0.5
        return ValidationReport("projection", res, tol)
    if isinstance(field, ConnectionField):
        res = {"is_one_form": 0.0 if all(len(k) == 1 for k in field.alpha.components) else 1.0}
        return ValidationReport("connection", res, {"is_one_form": 0.5})
    raise TypeError(f"cannot validate {type(field).__name__}")


def grassmann_connection(p: ProjectionField) -> ConnectionField:
    """The connection d + [P, dP] on the trivial window bundle.

    Restricted to Im(P) this is the projection connection P d; restricted to
    the complement it is the complementary projection connection, so the
    block form preserves both subbundles.
    """
    dp = exterior_d(p.as_form())
    alpha = MatrixForm(p.grid, p.matdim)
    pdata = p.data
    for key, arr in dp.components.items():
        alpha.set_component(key, pdata @ arr - arr @ pdata)
    return ConnectionField(p.grid, p.window, alpha, subbundle=p)
