"""Relativistic Vlasov-Poisson solver (Strang-split semi-Lagrangian).

    d/dt f + v(xi).grad_x f - grad V . grad_xi f = 0,   -kappa Lap V = n = int f dxi

Transport in x is an exact spectral shift of every xi row by ``-tau v(xi)``.
The kick in xi follows the backward characteristic ``xi -> xi + tau grad V(x)``
with cubic B-spline interpolation; the xi box is truncated, inflow is zero
and the mass pushed out of the box is accounted for.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .fields import Kernel, grad_potential, potential_energy
from .profiles import GaussianProfile
from .wigner import PhaseGrid, WignerGrid, marginal_density

__all__ = [
    "VlasovState",
    "BoundaryLossError",
    "initial_vlasov_state",
    "sample_profile",
    "transport_x",
    "kick_xi",
    "vlasov_strang_step",
    "classical_energy",
    "exact_free_flow",
]


class BoundaryLossError(RuntimeError):
    """More mass left the truncated xi box than the configured budget."""


@dataclass(frozen=True)
class VlasovState:
    f: WignerGrid
    V: np.ndarray
    kappa: int
    t: float = 0.0
    kernel: Kernel = Kernel()
    lost_mass: float = 0.0
    initial_mass: float = 0.0
    negativity: float = 0.0


def sample_profile(profile: GaussianProfile, phase: PhaseGrid) -> np.ndarray:
    """Samples of ``profile`` on ``phase`` with periodic images in x."""
    return np.broadcast_to(
        profile(phase.x_mesh(), phase.xi_mesh(), period=phase.x.lengths), phase.shape
    ).copy()


def initial_vlasov_state(profile: GaussianProfile, phase: PhaseGrid, kappa: int,
                         kernel: Kernel | None = None,
                         field_solver: Callable[[np.ndarray], np.ndarray] | None = None) -> VlasovState:
    f = WignerGrid(phase, sample_profile(profile, phase), 0.0)
    n = marginal_density(f)
    V = field_solver(n) if field_solver is not None else np.zeros(phase.x.shape)
    return VlasovState(f, V, kappa, 0.0, kernel or Kernel(), 0.0, f.mass)


def _xi_velocity(phase: PhaseGrid) -> list[np.ndarray]:
    xi = phase.xi_mesh()
    gamma = np.sqrt(sum(x**2 for x in xi) + 1.0)
    return [x / gamma for x in xi]


def transport_x(f: WignerGrid, tau: float) -> WignerGrid:
    """f(x, xi) <- f(x - tau v(xi), xi), exact for band-limited rows."""
    if tau == 0:
        return f
    phase = f.phase
    d = phase.dim
    v = _xi_velocity(phase)
    spec = np.fft.fftn(f.data, axes=phase.x_axes)
    for a in range(d):
        shape = [1] * (2 * d)
        shape[a] = phase.x.points[a]
        k = phase.x.wavenumbers(a).reshape(shape)
        fac = np.exp(-1j * k * tau * v[a])
        nyq = phase.x.points[a] // 2
        idx = [slice(None)] * (2 * d)
        idx[a] = slice(nyq, nyq + 1)
        fac[tuple(idx)] = np.cos(k[tuple(idx)] * tau * v[a])
        spec = spec * fac
    return f.with_data(np.fft.ifftn(spec, axes=phase.x_axes).real)


def _bspline_coefficients(values: np.ndarray) -> np.ndarray:
    """Cubic B-spline coefficients along the last axis, zero outside the box."""
    n = values.shape[-1]
    ab = np.empty((3, n))
    ab[0, :] = 1.0 / 6
    ab[1, :] = 4.0 / 6
    ab[2, :] = 1.0 / 6
    flat = values.reshape(-1, n).T
    return solve_banded((1, 1), ab, flat).T.reshape(values.shape)


def _shift_last_axis(values: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Evaluate the spline of each row at ``j + shift_row`` (index units)."""
    n = values.shape[-1]
    coeffs = _bspline_coefficients(values)
    base = np.floor(shift)
    t = (shift - base)[..., None]
    base = base.astype(int)[..., None]
    weights = [
        (1 - t) ** 3 / 6,
        (3 * t**3 - 6 * t**2 + 4) / 6,
        (-3 * t**3 + 3 * t**2 + 3 * t + 1) / 6,
        t**3 / 6,
    ]
    j = np.arange(n)
    out = np.zeros(values.shape)
    for r, w in zip((-1, 0, 1, 2), weights):
        idx = j + base + r
        inside = (idx >= 0) & (idx < n)
        gathered = np.take_along_axis(coeffs, np.clip(idx, 0, n - 1), axis=-1)
        out += np.where(inside, gathered, 0.0) * w
    return out


def kick_xi(f: WignerGrid, grad_v: np.ndarray, tau: float) -> tuple[WignerGrid, float]:
    """f(x, xi) <- f(x, xi + tau grad V(x)); returns (new f, mass lost at the xi boundary)."""
    phase = f.phase
    d = phase.dim
    if tau == 0 or not np.any(grad_v):
        return f, 0.0
    data = f.data
    before = float(np.sum(data))
    for a in range(d):
        shift = tau * grad_v[a] / phase.dxi[a]  # x-shaped
        moved = np.moveaxis(data, d + a, -1)
        sh = shift.reshape(shift.shape + (1,) * (d - 1))
        sh = np.broadcast_to(sh, moved.shape[:-1])
        data = np.moveaxis(_shift_last_axis(moved, sh), -1, d + a)
    lost = (before - float(np.sum(data))) * phase.cell_volume
    return f.with_data(data), lost


def classical_energy(f: WignerGrid, V: np.ndarray, kernel: Kernel | None = None) -> tuple[float, float]:
    """(kinetic, potential): int int sqrt(|xi|^2+1) f and (1/2) int V (n - nbar)."""
    phase = f.phase
    gamma = np.sqrt(sum(x**2 for x in phase.xi_mesh()) + 1.0)
    kinetic = float(np.sum(gamma * f.data)) * phase.cell_volume
    return kinetic, potential_energy(marginal_density(f), V, phase.x, kernel)


def vlasov_strang_step(
    state: VlasovState,
    dt: float,
    field_solver: Callable[[np.ndarray], np.ndarray] | None,
    loss_budget: float = 1e-4,
) -> VlasovState:
    """transport(dt/2), field solve, kick(dt), transport(dt/2).

    ``field_solver=None`` disables the force (free streaming).
    """
    f = transport_x(state.f, dt / 2)
    lost = 0.0
    V = state.V
    if field_solver is not None:
        V = field_solver(marginal_density(f))
        grad_v = grad_potential(V, f.phase.x)
        cap = min(f.phase.dxi) / max(float(np.max(np.abs(grad_v))), 1e-300)
        if dt > cap * (1 + 1e-12):
            warnings.warn(f"dt={dt:.3g} moves characteristics more than one xi cell (cap {cap:.3g})",
                          RuntimeWarning, stacklevel=2)
        f, lost = kick_xi(f, grad_v, dt)
    f = transport_x(f, dt / 2)
    total_lost = state.lost_mass + lost
    reference = state.initial_mass or f.mass
    if reference and abs(total_lost) > loss_budget * abs(reference):
        raise BoundaryLossError(f"xi-boundary mass loss {total_lost:.3e} exceeds {loss_budget:.0e} of total")
    peak = float(np.max(f.data)) if f.data.size else 0.0
    negativity = max(0.0, -float(np.min(f.data)) / peak) if peak > 0 else 0.0
    t = state.t + dt
    return replace(state, f=replace(f, t=t), V=V, t=t, lost_mass=total_lost,
                   negativity=max(state.negativity, negativity))


def exact_free_flow(profile: GaussianProfile, phase: PhaseGrid, t: float) -> np.ndarray:
    """f0(x - t v(xi), xi) sampled on ``phase`` (periodic images in x)."""
    v = _xi_velocity(phase)
    xs = [xm - t * va for xm, va in zip(phase.x_mesh(), v)]
    return np.broadcast_to(profile(xs, phase.xi_mesh(), period=phase.x.lengths), phase.shape).copy()
