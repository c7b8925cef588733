"""Spectral solvers for the self-consistent potential on periodic domains.

The Coulomb problem ``-kappa * Lap V = n`` is solved against a neutralizing
uniform background (the mean of ``n`` is removed) with the gauge
``mean(V) = 0``. The Yukawa problem ``(-Lap + lam**2) V = kappa * n`` is
invertible on every mode and keeps the mean. On a large periodic box the
Coulomb solve approximates the free-space kernel ``kappa / (4 pi |x|)`` in
three dimensions; there is no open-boundary solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Field, SpectralGrid

__all__ = [
    "Kernel",
    "FieldPair",
    "solve_poisson",
    "solve_yukawa",
    "solve_field",
    "grad_potential",
    "potential_energy",
    "potential_energy_fourier",
    "poisson_residual",
    "FieldSolverError",
]


class FieldSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Kernel:
    """Interaction kernel: ``"coulomb"`` or ``"yukawa"`` with screening ``lam``."""

    kind: str = "coulomb"
    lam: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("coulomb", "yukawa"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "yukawa" and (self.lam is None or not self.lam > 0):
            raise ValueError("Yukawa kernel needs a screening parameter lam > 0")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lam": self.lam}


@dataclass(frozen=True)
class FieldPair:
    density: np.ndarray
    potential: np.ndarray
    kappa: int
    kernel: Kernel


def _check_kappa(kappa: int) -> None:
    if kappa not in (1, -1):
        raise ValueError(f"kappa must be +1 or -1, got {kappa}")


def _as_real(n, grid: SpectralGrid) -> np.ndarray:
    data = n.data if isinstance(n, Field) else np.asarray(n)
    if np.iscomplexobj(data):
        if np.max(np.abs(data.imag), initial=0.0) > 0:
            raise ValueError("density must be real")
        data = data.real
    if data.shape != grid.shape:
        raise ValueError(f"density shape {data.shape} does not match grid {grid.shape}")
    return data.astype(float, copy=False)


def solve_poisson(n, kappa: int, grid: SpectralGrid) -> np.ndarray:
    """Potential with ``V_hat(k) = kappa * n_hat(k) / |k|**2`` for ``k != 0``."""
    _check_kappa(kappa)
    data = _as_real(n, grid)
    n_hat = np.fft.fftn(data)
    k2 = grid.k_squared
    with np.errstate(divide="ignore", invalid="ignore"):
        v_hat = np.where(k2 > 0, kappa * n_hat / k2, 0.0)
    return np.fft.ifftn(v_hat).real


def solve_yukawa(n, kappa: int, lam: float, grid: SpectralGrid) -> np.ndarray:
    """Screened potential ``V_hat(k) = kappa * n_hat(k) / (|k|**2 + lam**2)``."""
    _check_kappa(kappa)
    if not lam > 0:
        raise ValueError(f"Yukawa screening must be positive, got {lam}")
    data = _as_real(n, grid)
    v_hat = kappa * np.fft.fftn(data) / (grid.k_squared + lam**2)
    return np.fft.ifftn(v_hat).real


def solve_field(n, kappa: int, grid: SpectralGrid, kernel: Kernel | None = None) -> np.ndarray:
    kernel = kernel or Kernel()
    if kernel.kind == "coulomb":
        return solve_poisson(n, kappa, grid)
    return solve_yukawa(n, kappa, kernel.lam, grid)


def grad_potential(V, grid: SpectralGrid) -> np.ndarray:
    """Spectral gradient, shape ``(d,) + grid.shape``; Nyquist modes zeroed."""
    data = _as_real(V, grid)
    v_hat = np.fft.fftn(data)
    v_hat = np.where(grid.nyquist_mask, 0.0, v_hat)
    return np.stack([np.fft.ifftn(1j * k * v_hat).real for k in grid.k_mesh()])


def poisson_residual(n, V, kappa: int, grid: SpectralGrid) -> float:
    """max |-kappa Lap V - (n - mean n)|, Laplacian taken spectrally."""
    n_data = _as_real(n, grid)
    lap = np.fft.ifftn(-grid.k_squared * np.fft.fftn(_as_real(V, grid))).real
    return float(np.max(np.abs(-kappa * lap - (n_data - n_data.mean()))))


def potential_energy(n, V, grid: SpectralGrid, kernel: Kernel | None = None) -> float:
    """Self-consistent interaction energy ``(1/2) int V (n - nbar) dx``.

    ``V`` already carries the coupling sign, so the result is ``>= 0`` for
    ``kappa = +1`` and ``<= 0`` for ``kappa = -1``. For the Yukawa kernel the
    mean of ``n`` is kept, since the zero mode is part of the interaction.
    """
    kernel = kernel or Kernel()
    n_data = _as_real(n, grid)
    if kernel.kind == "coulomb":
        n_data = n_data - n_data.mean()
    return 0.5 * float(np.sum(_as_real(V, grid) * n_data)) * grid.cell_volume


def potential_energy_fourier(n, kappa: int, grid: SpectralGrid, kernel: Kernel | None = None) -> float:
    """Same energy evaluated as a Fourier sum, independent of any potential."""
    kernel = kernel or Kernel()
    _check_kappa(kappa)
    n_hat = np.fft.fftn(_as_real(n, grid)) * grid.cell_volume
    k2 = grid.k_squared
    if kernel.kind == "coulomb":
        with np.errstate(divide="ignore", invalid="ignore"):
            green = np.where(k2 > 0, 1.0 / k2, 0.0)
    else:
        green = 1.0 / (k2 + kernel.lam**2)
    return 0.5 * kappa * float(np.sum(green * np.abs(n_hat) ** 2)) / grid.volume
