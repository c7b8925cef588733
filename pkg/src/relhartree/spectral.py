"""Periodic grids, unitary transforms, Fourier multipliers and band-limited
interpolation.

Transform convention (used by every module in the package)
-----------------------------------------------------------
A grid with ``d`` axes has, per axis, length ``L``, ``N`` points, spacing
``dx = L / N`` and nodes ``x_n = x0 + n * dx`` (``x0`` defaults to ``-L/2``).
Wavenumbers are ``xi_k = 2*pi*k / L`` for ``k = -N/2 .. N/2-1`` and are stored
in FFT order ``k = 0, 1, .., N/2-1, -N/2, .., -1``.

The forward transform approximates the unitary continuous Fourier transform
``u_hat(xi) = (2*pi)**(-d/2) * int u(x) exp(-i xi.x) dx``::

    c_k = (dx / sqrt(2*pi))**d * sum_n u_n * exp(-i xi_k . x_n)

so that Parseval reads ``sum |u_n|**2 dx**d == sum |c_k|**2 (2*pi/L)**d``.
The phase ``exp(-i xi_k . x0)`` is part of the coefficient, which makes
``c_k`` independent of where the grid starts.

The unpaired Nyquist mode ``k = -N/2`` is interpolated as a cosine, so the
band-limited interpolant of real samples is real everywhere. Multipliers
flagged as odd (derivative-like symbols) zero that mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "SpectralGrid",
    "Field",
    "make_grid",
    "forward_transform",
    "inverse_transform",
    "apply_multiplier",
    "trig_interpolate",
    "shifted_samples",
    "RepresentationError",
]

Multiplier = Union[np.ndarray, Callable[..., np.ndarray]]


class RepresentationError(ValueError):
    """A field was handed to a transform in the wrong representation."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpectralGrid:
    """Periodic tensor grid with its wavenumber set.

    Attributes:
        lengths: domain length per axis.
        points: number of nodes per axis (power of two, >= 8).
        origin: coordinate of node 0 per axis.
    """

    lengths: tuple[float, ...]
    points: tuple[int, ...]
    origin: tuple[float, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.points) <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(self.points)}")
        if not len(self.lengths) == len(self.points) == len(self.origin):
            raise ValueError("lengths, points and origin must have equal length")
        for n in self.points:
            if n % 2:
                raise ValueError(f"point count must be even, got {n}")
            if n < 8 or not _is_power_of_two(n):
                raise ValueError(f"point count must be a power of two >= 8, got {n}")
        for length in self.lengths:
            if not (np.isfinite(length) and length > 0):
                raise ValueError(f"domain length must be positive, got {length}")

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.points)

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(length / n for length, n in zip(self.lengths, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def dual_cell_volume(self) -> float:
        """Wavenumber-space quadrature weight, prod(2*pi/L)."""
        return float(np.prod([2 * np.pi / length for length in self.lengths]))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def coords(self, axis: int = 0) -> np.ndarray:
        n = self.points[axis]
        return self.origin[axis] + self.spacing[axis] * np.arange(n)

    def wavenumbers(self, axis: int = 0) -> np.ndarray:
        """Wavenumbers of one axis in FFT order."""
        n = self.points[axis]
        return 2 * np.pi * np.fft.fftfreq(n, d=self.lengths[axis] / n)

    def sorted_wavenumbers(self, axis: int = 0) -> np.ndarray:
        return np.fft.fftshift(self.wavenumbers(axis))

    def mesh(self) -> list[np.ndarray]:
        """Open (broadcastable) coordinate mesh."""
        return list(np.ix_(*[self.coords(a) for a in range(self.dim)]))

    def k_mesh(self) -> list[np.ndarray]:
        """Open (broadcastable) wavenumber mesh in FFT order."""
        return list(np.ix_(*[self.wavenumbers(a) for a in range(self.dim)]))

    @cached_property
    def k_squared(self) -> np.ndarray:
        total = np.zeros(self.shape)
        for k in self.k_mesh():
            total = total + k**2
        return total

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on every mode that is unpaired on at least one axis."""
        mask = np.zeros(self.shape, dtype=bool)
        for axis, n in enumerate(self.points):
            index = [slice(None)] * self.dim
            index[axis] = n // 2
            mask[tuple(index)] = True
        return mask

    def _origin_phase(self) -> np.ndarray:
        phase = np.ones(self.shape, dtype=complex)
        for k, x0 in zip(self.k_mesh(), self.origin):
            phase = phase * np.exp(-1j * k * x0)
        return phase

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    def to_dict(self) -> dict:
        return {
            "d": self.dim,
            "L": list(self.lengths),
            "N": list(self.points),
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralGrid":
        return make_grid(data["d"], data["L"], data["N"], origin=data.get("origin"))


def make_grid(
    d: int,
    L: float | Sequence[float],
    N: int | Sequence[int],
    origin: float | Sequence[float] | None = None,
) -> SpectralGrid:
    """Build a ``d``-dimensional periodic grid.

    Scalars for ``L``, ``N`` and ``origin`` are broadcast to every axis. The
    default origin centres the domain on zero.

    >>> make_grid(1, 2 * np.pi, 8).sorted_wavenumbers()
    array([-4., -3., -2., -1.,  0.,  1.,  2.,  3.])
    """
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    lengths = tuple(float(v) for v in np.broadcast_to(np.asarray(L, dtype=float), (d,)))
    points_arr = np.broadcast_to(np.asarray(N), (d,))
    if not np.all(np.equal(np.mod(points_arr, 1), 0)):
        raise ValueError(f"point counts must be integers, got {N}")
    points = tuple(int(v) for v in points_arr)
    if origin is None:
        origin_t = tuple(-length / 2 for length in lengths)
    else:
        origin_t = tuple(float(v) for v in np.broadcast_to(np.asarray(origin, dtype=float), (d,)))
    return SpectralGrid(lengths=lengths, points=points, origin=origin_t)


@dataclass(frozen=True)
class Field:
    """Samples on a grid, either in physical or in Fourier representation."""

    grid: SpectralGrid
    data: np.ndarray
    spectral: bool = False

    def __post_init__(self) -> None:
        if self.data.shape[-self.grid.dim:] != self.grid.shape:
            raise ValueError(
                f"trailing data shape {self.data.shape} does not match grid {self.grid.shape}"
            )

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.data)


def forward_transform(field: Field) -> Field:
    """Physical samples to unitary Fourier coefficients."""
    if field.spectral:
        raise RepresentationError("field is already in Fourier representation")
    grid = field.grid
    scale = (np.prod(grid.spacing) / np.sqrt(2 * np.pi) ** grid.dim)
    coeffs = np.fft.fftn(field.data, axes=grid.axes) * scale * grid._origin_phase()
    return Field(grid, coeffs, spectral=True)


def inverse_transform(field: Field, real: bool = False) -> Field:
    """Unitary Fourier coefficients back to physical samples.

    With ``real=True`` the imaginary part is dropped; callers use this only
    when the coefficients are known to be Hermitian.
    """
    if not field.spectral:
        raise RepresentationError("field is already in physical representation")
    grid = field.grid
    scale = (np.prod(grid.spacing) / np.sqrt(2 * np.pi) ** grid.dim)
    data = np.fft.ifftn(field.data / (scale * grid._origin_phase()), axes=grid.axes)
    if real:
        data = data.real
    return Field(grid, data, spectral=False)


def _evaluate_multiplier(grid: SpectralGrid, m: Multiplier) -> np.ndarray:
    if callable(m):
        values = m(*grid.k_mesh())
    else:
        values = m
    values = np.broadcast_to(np.asarray(values), grid.shape)
    if not np.all(np.isfinite(values)):
        raise ValueError("multiplier has non-finite values on the grid wavenumbers")
    return values


def _mirror(values: np.ndarray, dim: int) -> np.ndarray:
    """values(-k) for an array stored in FFT order on the last ``dim`` axes."""
    out = values
    for axis in range(-dim, 0):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def apply_multiplier(field: Field, m: Multiplier, odd: bool = False) -> Field:
    """Multiply a physical field by the symbol ``m(xi)`` in Fourier space.

    ``m`` is either an array in FFT order or a callable receiving the open
    wavenumber mesh (one argument per axis). With ``odd=True`` the Nyquist
    modes are zeroed. The result is real when the input is real and the
    symbol is Hermitian, ``m(-xi) == conj(m(xi))``.
    """
    if field.spectral:
        raise RepresentationError("apply_multiplier expects a physical field")
    grid = field.grid
    values = _evaluate_multiplier(grid, m)
    if odd:
        values = np.where(grid.nyquist_mask, 0.0, values)
    spectrum = np.fft.fftn(field.data, axes=grid.axes)
    data = np.fft.ifftn(spectrum * values, axes=grid.axes)
    hermitian = np.allclose(_mirror(values, grid.dim), np.conj(values), rtol=1e-14, atol=0.0)
    if field.is_real and hermitian:
        data = data.real
    return Field(grid, data, spectral=False)


def _axis_exponentials(grid: SpectralGrid, axis: int, positions: np.ndarray) -> np.ndarray:
    """Matrix E[m, k] = exp(i xi_k (p_m - x0)) with the Nyquist column as a cosine."""
    k = grid.wavenumbers(axis)
    rel = np.asarray(positions, dtype=float)[..., None] - grid.origin[axis]
    mat = np.exp(1j * rel * k)
    nyq = grid.points[axis] // 2
    mat[..., nyq] = np.cos(rel[..., 0] * k[nyq])
    return mat


def trig_interpolate(field: Field, points: np.ndarray) -> np.ndarray:
    """Evaluate the band-limited interpolant of ``field`` at arbitrary points.

    ``points`` has shape ``(M, d)`` (or ``(M,)`` in one dimension); leading
    axes of ``field.data`` are carried along, so the result has shape
    ``data.shape[:-d] + (M,)``. Points are wrapped periodically.
    """
    if field.spectral:
        raise RepresentationError("trig_interpolate expects a physical field")
    grid = field.grid
    pts = np.asarray(points, dtype=float)
    if grid.dim == 1 and pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != grid.dim:
        raise ValueError(f"points must have shape (M, {grid.dim})")
    coeffs = np.fft.fftn(field.data, axes=grid.axes) / grid.size
    lead = coeffs.shape[: coeffs.ndim - grid.dim]
    coeffs = coeffs.reshape((-1,) + grid.shape)
    mats = [_axis_exponentials(grid, a, pts[:, a]) for a in range(grid.dim)]
    # contract the first axis against all points, then the rest elementwise in m
    out = np.einsum("mk,bk...->bm...", mats[0], coeffs)
    for a in range(1, grid.dim):
        out = np.einsum("mk,bmk...->bm...", mats[a], out)
    if not np.iscomplexobj(field.data):
        out = out.real
    return out.reshape(lead + (pts.shape[0],))


def shifted_samples(data: np.ndarray, grid: SpectralGrid, shifts: np.ndarray) -> np.ndarray:
    """Samples of ``u(x + s)`` on the grid nodes for a batch of shifts ``s``.

    ``data`` has the grid shape on its trailing axes; ``shifts`` has shape
    ``(M, d)`` (or ``(M,)`` in one dimension). The result has shape
    ``data.shape[:-d] + (M,) + grid.shape``. Uses the same cosine treatment
    of the Nyquist mode as :func:`trig_interpolate`.
    """
    s = np.asarray(shifts, dtype=float)
    if grid.dim == 1 and s.ndim == 1:
        s = s[:, None]
    spectrum = np.fft.fftn(data, axes=grid.axes)
    spectrum = np.expand_dims(spectrum, axis=-grid.dim - 1)
    phase = np.ones((s.shape[0],) + grid.shape, dtype=complex)
    for a in range(grid.dim):
        k = grid.wavenumbers(a)
        fac = np.exp(1j * s[:, a, None] * k)
        nyq = grid.points[a] // 2
        fac[:, nyq] = np.cos(s[:, a] * k[nyq])
        shape = [s.shape[0]] + [1] * grid.dim
        shape[a + 1] = grid.points[a]
        phase = phase * fac.reshape(shape)
    out = np.fft.ifftn(spectrum * phase, axes=grid.axes)
    if not np.iscomplexobj(data):
        out = out.real
    return out
