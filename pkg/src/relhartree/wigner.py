"""eps-scaled Wigner transform and the phase-space operators of its evolution.

For a mixed state the Wigner function is

    f(x, xi) = (2 pi)^-d  sum_j lam_j  int psi_j(x + eps y/2) conj(psi_j(x - eps y/2)) e^{-i xi.y} dy.

On the torus the separation ``eps*y`` is restricted to the minimal-image
window ``[-L/2, L/2]`` per axis, sampled at multiples of the grid spacing
(half-grid shifts of the orbitals, evaluated by exact trigonometric
interpolation). The two end samples are complex conjugates of each other and
both carry weight ``1/sqrt(2)``: equal weights keep ``f`` real, and their
squares add up to the single end sample of the periodic rule, which keeps the
L2 identity exact. The xi grid is
independent of the orbital grid; :func:`natural_phase_grid` gives the one
dual to the separation samples, on which the marginal is exact.

The evolution reads ``d/dt f = -Gamma f - Theta[V] f``. In the classical
limit ``Gamma f -> v(xi).grad_x f`` with ``v = xi / sqrt(|xi|^2 + 1)`` and
``Theta[V] f -> -grad V . grad_xi f``, i.e. ``<Theta f, phi> -> <f, grad V . grad_xi phi>``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .spectral import SpectralGrid, trig_interpolate, Field, shifted_samples

__all__ = [
    "PhaseGrid",
    "WignerGrid",
    "TestFunction",
    "XiBoundaryWarning",
    "natural_phase_grid",
    "wigner_transform",
    "marginal_density",
    "gamma_symbol",
    "relativistic_velocity",
    "apply_gamma",
    "delta_symbol",
    "apply_theta",
    "weak_pairing",
    "evolution_residuals",
    "evolution_residual",
]


class XiBoundaryWarning(RuntimeWarning):
    """A noticeable fraction of the phase-space mass sits at the xi boundary."""


@dataclass(frozen=True)
class PhaseGrid:
    """Tensor grid: periodic x (a SpectralGrid) times a truncated xi box ``[-xi_max, xi_max)``."""

    x: SpectralGrid
    xi_max: tuple[float, ...]
    xi_points: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.xi_max) != self.x.dim or len(self.xi_points) != self.x.dim:
            raise ValueError("xi grid must have one entry per spatial axis")
        for n, m in zip(self.xi_points, self.xi_max):
            if n < 8 or n % 2:
                raise ValueError(f"xi point count must be even and >= 8, got {n}")
            if not m > 0:
                raise ValueError("xi_max must be positive")

    @classmethod
    def create(cls, x: SpectralGrid, xi_max, xi_points) -> "PhaseGrid":
        d = x.dim
        return cls(
            x,
            tuple(float(v) for v in np.broadcast_to(np.asarray(xi_max, dtype=float), (d,))),
            tuple(int(v) for v in np.broadcast_to(np.asarray(xi_points), (d,))),
        )

    @property
    def dim(self) -> int:
        return self.x.dim

    @property
    def dxi(self) -> tuple[float, ...]:
        return tuple(2 * m / n for m, n in zip(self.xi_max, self.xi_points))

    def xi(self, axis: int = 0) -> np.ndarray:
        return -self.xi_max[axis] + self.dxi[axis] * np.arange(self.xi_points[axis])

    def eta(self, axis: int = 0) -> np.ndarray:
        """Variable dual to xi (FFT order)."""
        return 2 * np.pi * np.fft.fftfreq(self.xi_points[axis], d=self.dxi[axis])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.x.shape + tuple(self.xi_points)

    @property
    def xi_axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def x_axes(self) -> tuple[int, ...]:
        return tuple(range(-2 * self.dim, -self.dim))

    @property
    def xi_cell(self) -> float:
        return float(np.prod(self.dxi))

    @property
    def cell_volume(self) -> float:
        return self.x.cell_volume * self.xi_cell

    def x_mesh(self) -> list[np.ndarray]:
        """Broadcastable x coordinates over the full phase shape."""
        d = self.dim
        out = []
        for a in range(d):
            shape = [1] * (2 * d)
            shape[a] = self.x.points[a]
            out.append(self.x.coords(a).reshape(shape))
        return out

    def xi_mesh(self) -> list[np.ndarray]:
        d = self.dim
        out = []
        for a in range(d):
            shape = [1] * (2 * d)
            shape[d + a] = self.xi_points[a]
            out.append(self.xi(a).reshape(shape))
        return out

    def to_dict(self) -> dict:
        return {"x": self.x.to_dict(), "xi_max": list(self.xi_max), "xi_points": list(self.xi_points)}


def natural_phase_grid(grid: SpectralGrid, eps: float) -> PhaseGrid:
    """One xi period ``2 pi eps N / L`` sampled at 2N points (spacing pi eps / L).

    The N + 1 separation frequencies are orthogonal on this grid, so the
    marginal and the L2 identity ``||f||^2 = (2 pi eps)^-d ||rho||^2`` are exact
    for orbitals band-limited below N/4.
    """
    return PhaseGrid.create(
        grid,
        [eps * np.pi * n / length for n, length in zip(grid.points, grid.lengths)],
        [2 * n for n in grid.points],
    )


@dataclass(frozen=True)
class WignerGrid:
    """Real phase-space samples ``f(x, xi)``; ``eps = 0`` marks classical fields."""

    phase: PhaseGrid
    data: np.ndarray
    eps: float
    t: float = 0.0
    imag_residue: float = 0.0
    boundary_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.data.shape != self.phase.shape:
            raise ValueError(f"data shape {self.data.shape} != phase grid {self.phase.shape}")
        if np.iscomplexobj(self.data):
            raise ValueError("Wigner samples must be real")

    @property
    def mass(self) -> float:
        return float(np.sum(self.data)) * self.phase.cell_volume

    @property
    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.data**2) * self.phase.cell_volume))

    def with_data(self, data: np.ndarray, **changes) -> "WignerGrid":
        return replace(self, data=data, **changes)


def _xi_boundary_fraction(data: np.ndarray, phase: PhaseGrid) -> float:
    total = float(np.sum(np.abs(data)))
    if total == 0:
        return 0.0
    d = phase.dim
    edge = np.zeros(phase.shape, dtype=bool)
    for a in range(d):
        idx = [slice(None)] * (2 * d)
        idx[d + a] = [0, phase.xi_points[a] - 1]
        edge[tuple(idx)] = True
    return float(np.sum(np.abs(data[edge]))) / total


def wigner_transform(
    state,
    phase: PhaseGrid | None = None,
    chunk: int = 8,
    strict: bool = False,
    boundary_tol: float = 1e-6,
) -> WignerGrid:
    """Wigner function of a :class:`~relhartree.hartree.MixedState` on ``phase``.

    The imaginary residue (relative) is measured and stored before being
    discarded. A xi-boundary mass fraction above ``boundary_tol`` warns, or
    raises ``ValueError`` when ``strict``.
    """
    grid = state.grid
    eps = state.eps
    phase = phase or natural_phase_grid(grid, eps)
    if phase.x != grid:
        raise ValueError("phase grid and state live on different x grids")
    d = grid.dim
    # separation samples eps*y = l*dx, l = -N/2..N/2 per axis, conjugate ends at 1/sqrt(2)
    offsets = [np.arange(-n // 2, n // 2 + 1) for n in grid.points]
    sep_weights = []
    for off in offsets:
        w = np.ones(off.size)
        w[0] = w[-1] = np.sqrt(0.5)
        sep_weights.append(w)
    lmesh = np.meshgrid(*offsets, indexing="ij")
    half_shift = np.stack([lmesh[a].ravel() * grid.spacing[a] / 2 for a in range(d)], axis=-1)
    M = half_shift.shape[0]

    g = np.zeros((M,) + grid.shape, dtype=complex)
    weights = np.asarray(state.weights, dtype=float)
    active = np.nonzero(weights > 0)[0]
    for start in range(0, active.size, chunk):
        idx = active[start:start + chunk]
        orb = state.orbitals[idx]
        plus = shifted_samples(orb, grid, half_shift)
        minus = shifted_samples(orb, grid, -half_shift)
        g += np.einsum("j,jm...->m...", weights[idx], plus * minus.conj())

    g = g.reshape(tuple(o.size for o in offsets) + grid.shape)
    # contract each separation axis against exp(-i xi y) with the separation weights
    f = g
    for a in range(d):
        dy = grid.spacing[a] / eps
        y = offsets[a] * dy
        mat = np.exp(-1j * np.outer(phase.xi(a), y)) * (sep_weights[a] * dy / (2 * np.pi))[None, :]
        # current layout: (sep axes a.., x axes, xi axes < a); contract leading axis
        f = np.tensordot(mat, f, axes=([1], [0]))
        f = np.moveaxis(f, 0, -1)
    # layout now: x axes then xi axes
    scale = float(np.max(np.abs(f.real))) if f.size else 0.0
    residue = float(np.max(np.abs(f.imag))) / scale if scale > 0 else 0.0
    data = np.ascontiguousarray(f.real)
    frac = _xi_boundary_fraction(data, phase)
    if frac > boundary_tol:
        msg = f"xi-boundary mass fraction {frac:.2e} exceeds {boundary_tol:.0e}; increase xi_max"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, XiBoundaryWarning, stacklevel=2)
    return WignerGrid(phase, data, eps, state.t, residue, frac)


def marginal_density(f: WignerGrid) -> np.ndarray:
    """n(x) = int f(x, xi) dxi by the rectangle rule on the xi grid."""
    return np.sum(f.data, axis=f.phase.xi_axes) * f.phase.xi_cell


def relativistic_velocity(xi: np.ndarray) -> np.ndarray:
    """v = xi / sqrt(|xi|^2 + 1) for xi with the vector index last."""
    xi = np.asarray(xi, dtype=float)
    return xi / np.sqrt(np.sum(xi**2, axis=-1, keepdims=True) + 1.0)


def gamma_symbol(eps: float, y, xi) -> np.ndarray:
    """2 xi / (sqrt(|xi + eps y/2|^2 + 1) + sqrt(|xi - eps y/2|^2 + 1)).

    ``y`` and ``xi`` broadcast with the vector index last; scalars are 1-d.
    """
    y = np.asarray(y, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if y.ndim == 0:
        y = y[None]
    if xi.ndim == 0:
        xi = xi[None]
    plus = np.sqrt(np.sum((xi + eps * y / 2) ** 2, axis=-1, keepdims=True) + 1.0)
    minus = np.sqrt(np.sum((xi - eps * y / 2) ** 2, axis=-1, keepdims=True) + 1.0)
    return 2 * xi / (plus + minus)


def _x_dual_mesh(phase: PhaseGrid) -> list[np.ndarray]:
    d = phase.dim
    out = []
    for a in range(d):
        shape = [1] * (2 * d)
        shape[a] = phase.x.points[a]
        out.append(phase.x.wavenumbers(a).reshape(shape))
    return out


def _x_nyquist(phase: PhaseGrid) -> np.ndarray:
    return phase.x.nyquist_mask.reshape(phase.x.shape + (1,) * phase.dim)


def _xi_nyquist(phase: PhaseGrid) -> np.ndarray:
    d = phase.dim
    mask = np.zeros(tuple(phase.xi_points), dtype=bool)
    for a in range(d):
        idx = [slice(None)] * d
        idx[a] = phase.xi_points[a] // 2
        mask[tuple(idx)] = True
    return mask.reshape((1,) * d + tuple(phase.xi_points))


def apply_gamma(f: WignerGrid, eps: float | None = None) -> WignerGrid:
    """Kinetic operator: multiply the x-transform by ``i q.gamma(q, xi)``.

    ``eps = 0`` gives the classical transport term ``v(xi).grad_x f``.
    """
    eps = f.eps if eps is None else eps
    phase = f.phase
    q = _x_dual_mesh(phase)
    xi = phase.xi_mesh()
    qxi = sum(qa * xa for qa, xa in zip(q, xi))
    if eps == 0:
        xi2 = sum(xa**2 for xa in xi)
        symbol = 1j * qxi / np.sqrt(xi2 + 1.0)
    else:
        plus = np.sqrt(sum((xa + eps * qa / 2) ** 2 for qa, xa in zip(q, xi)) + 1.0)
        minus = np.sqrt(sum((xa - eps * qa / 2) ** 2 for qa, xa in zip(q, xi)) + 1.0)
        symbol = 2j * qxi / (plus + minus)
    symbol = np.where(_x_nyquist(phase), 0.0, symbol)
    spec = np.fft.fftn(f.data, axes=phase.x_axes)
    out = np.fft.ifftn(spec * symbol, axes=phase.x_axes).real
    return f.with_data(out)


def delta_symbol(V: np.ndarray, grid: SpectralGrid, eps: float, x, eta) -> np.ndarray:
    """(V(x + eps eta/2) - V(x - eps eta/2)) / eps at paired points.

    ``x`` and ``eta`` have shape ``(M, d)`` (or ``(M,)`` in 1-d); ``V`` is
    interpolated trigonometrically. ``eps = 0`` returns ``eta . grad V(x)``.
    """
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if grid.dim == 1:
        x = x.reshape(-1, 1)
        eta = eta.reshape(-1, 1)
    field = Field(grid, np.asarray(V, dtype=float))
    if eps == 0:
        from .fields import grad_potential

        grads = grad_potential(V, grid)
        gvals = np.stack([trig_interpolate(Field(grid, gr), x) for gr in grads], axis=-1)
        return np.sum(gvals * eta, axis=-1)
    up = trig_interpolate(field, x + eps * eta / 2)
    down = trig_interpolate(field, x - eps * eta / 2)
    return (up - down) / eps


def _delta_table(V: np.ndarray, phase: PhaseGrid, eps: float) -> np.ndarray:
    """delta(x_n, eta_k) on grid nodes times the eta grid, shape x.shape + eta.shape.

    Uses V(x + s) - V(x - s) = sum_k c_k e^{ik(x-x0)} 2i sin(k.s); the Nyquist
    cosine contributes nothing at the nodes.
    """
    grid = phase.x
    d = grid.dim
    v_hat = np.fft.fftn(np.asarray(V, dtype=float))
    v_hat = np.where(grid.nyquist_mask, 0.0, v_hat)
    kmesh = grid.k_mesh()
    eta_axes = [phase.eta(a) for a in range(d)]
    eta_mesh = np.meshgrid(*eta_axes, indexing="ij")
    eta_flat = np.stack([e.ravel() for e in eta_mesh], axis=-1)  # (P, d)
    if eps == 0:
        grads = [np.fft.ifftn(1j * k * v_hat).real for k in kmesh]
        table = sum(gr[..., None] * eta_flat[:, a] for a, gr in enumerate(grads))
        return table.reshape(grid.shape + tuple(phase.xi_points))
    out = np.empty(grid.shape + (eta_flat.shape[0],))
    block = max(1, int(2**22 // grid.size))
    for start in range(0, eta_flat.shape[0], block):
        e = eta_flat[start:start + block]  # (B, d)
        arg = 0.0
        for a in range(d):
            shape = [e.shape[0]] + [1] * d
            shape[a + 1] = grid.points[a]
            arg = arg + (e[:, a, None] * grid.wavenumbers(a)[None, :]).reshape(shape)
        mult = 2j * np.sin(eps * arg / 2) / eps
        vals = np.fft.ifftn(v_hat[None] * mult, axes=tuple(range(1, d + 1))).real
        out[..., start:start + e.shape[0]] = np.moveaxis(vals, 0, -1)
    return out.reshape(grid.shape + tuple(phase.xi_points))


def apply_theta(f: WignerGrid, V: np.ndarray, eps: float | None = None) -> WignerGrid:
    """Potential operator: for each x, multiply the xi-transform by ``i delta(x, eta)``.

    ``eps = 0`` gives the limit ``-grad V . grad_xi f``.
    """
    eps = f.eps if eps is None else eps
    phase = f.phase
    table = _delta_table(V, phase, eps)
    table = np.where(_xi_nyquist(phase), 0.0, table)
    spec = np.fft.ifftn(f.data, axes=phase.xi_axes)
    out = np.fft.fftn(1j * table * spec, axes=phase.xi_axes).real
    return f.with_data(out)


@dataclass(frozen=True)
class TestFunction:
    """Unit-amplitude phase-space Gaussian, periodized in x."""

    __test__ = False  # not a pytest class

    center_x: tuple[float, ...]
    center_xi: tuple[float, ...]
    width_x: tuple[float, ...]
    width_xi: tuple[float, ...]

    def __post_init__(self) -> None:
        if min(self.width_x + self.width_xi) <= 0:
            raise ValueError("test-function widths must be positive")

    @classmethod
    def create(cls, center_x, center_xi, width_x, width_xi, d: int = 1) -> "TestFunction":
        def tup(v):
            return tuple(float(u) for u in np.broadcast_to(np.asarray(v, dtype=float), (d,)))

        return cls(tup(center_x), tup(center_xi), tup(width_x), tup(width_xi))

    def to_dict(self) -> dict:
        return {
            "center_x": list(self.center_x),
            "center_xi": list(self.center_xi),
            "width_x": list(self.width_x),
            "width_xi": list(self.width_xi),
        }

    def check_resolved(self, phase: PhaseGrid, tail_tol: float = 1e-12) -> None:
        for a in range(phase.dim):
            if self.width_x[a] < 2 * phase.x.spacing[a] or self.width_xi[a] < 2 * phase.dxi[a]:
                raise ValueError("test function narrower than two grid spacings")
            lo = -phase.xi_max[a]
            hi = phase.xi_max[a] - phase.dxi[a]
            tail = max(
                np.exp(-((lo - self.center_xi[a]) ** 2) / (2 * self.width_xi[a] ** 2)),
                np.exp(-((hi - self.center_xi[a]) ** 2) / (2 * self.width_xi[a] ** 2)),
            )
            if tail > tail_tol:
                raise ValueError(f"test function tail {tail:.1e} at the xi boundary exceeds {tail_tol:.0e}")

    def evaluate(self, phase: PhaseGrid) -> np.ndarray:
        d = phase.dim
        out = np.ones((1,) * (2 * d))
        for a, (xm, xim) in enumerate(zip(phase.x_mesh(), phase.xi_mesh())):
            L = phase.x.lengths[a]
            gx = sum(
                np.exp(-((xm - self.center_x[a] + m * L) ** 2) / (2 * self.width_x[a] ** 2))
                for m in (-2, -1, 0, 1, 2)
            )
            out = out * gx * np.exp(-((xim - self.center_xi[a]) ** 2) / (2 * self.width_xi[a] ** 2))
        return np.broadcast_to(out, phase.shape)


def weak_pairing(f: WignerGrid | np.ndarray, phi: TestFunction, phase: PhaseGrid | None = None) -> float:
    """<f, phi> = int int f phi dx dxi by the rectangle rule (spectral for periodic x)."""
    if isinstance(f, WignerGrid):
        phase, data = f.phase, f.data
    else:
        if phase is None:
            raise ValueError("raw arrays need their phase grid")
        data = np.asarray(f)
    phi.check_resolved(phase)
    return float(np.sum(data * phi.evaluate(phase))) * phase.cell_volume


def evolution_residuals(
    snapshots: Sequence[WignerGrid],
    dt: float,
    V: np.ndarray,
    phis: Sequence[TestFunction],
) -> np.ndarray:
    """|-<d_t f, phi> - <Gamma f, phi> - <Theta f, phi>| per test function.

    ``snapshots`` are three Wigner functions at ``t - dt, t, t + dt``; the time
    derivative is the central difference and ``V`` is the potential at ``t``.
    """
    if len(snapshots) != 3:
        raise ValueError("need three consecutive snapshots")
    eps_values = {s.eps for s in snapshots}
    if len(eps_values) != 1:
        raise ValueError(f"snapshots carry different eps values {sorted(eps_values)}")
    prev, now, nxt = snapshots
    if not (prev.phase == now.phase == nxt.phase):
        raise ValueError("snapshots live on different phase grids")
    eps = now.eps
    gamma_f = apply_gamma(now, eps)
    theta_f = apply_theta(now, V, eps)
    out = []
    for phi in phis:
        dtf = (weak_pairing(nxt, phi) - weak_pairing(prev, phi)) / (2 * dt)
        out.append(abs(-dtf - weak_pairing(gamma_f, phi) - weak_pairing(theta_f, phi)))
    return np.array(out)


def evolution_residual(snapshots, dt, V, phis) -> float:
    """Maximum over test functions of :func:`evolution_residuals`."""
    return float(np.max(evolution_residuals(snapshots, dt, V, phis)))
