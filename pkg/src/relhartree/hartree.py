"""Mixed-state semi-relativistic Hartree dynamics.

Each orbital obeys ``i eps d/dt psi = sqrt(-eps^2 Lap + 1) psi + V psi`` with
``V`` produced self-consistently from ``n = sum_j lam_j |psi_j|^2``. Time
stepping is Strang splitting, kinetic half step / potential kick / kinetic
half step, with the potential taken from the density after the first half
step. Both sub-flows are exact multiplications (in Fourier space and in
physical space), so weights and orbital norms never drift.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .fields import Kernel, FieldSolverError, poisson_residual, solve_field
from .io import dump_array, load_array, write_json
from .profiles import GaussianProfile
from .spectral import RepresentationError, SpectralGrid

__all__ = [
    "MixedState",
    "HartreeParams",
    "FieldSolver",
    "CoverageError",
    "OrthonormalizationError",
    "init_coherent_mixture",
    "coherent_lattice",
    "density",
    "kinetic_step",
    "potential_step",
    "strang_step",
    "evolve",
    "dispersion",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)


class CoverageError(ValueError):
    """The coherent-state lattice leaves too much of the profile uncovered."""

    def __init__(self, uncovered: float, tol: float):
        super().__init__(f"lattice leaves {uncovered:.3e} of the profile mass uncovered (tol {tol:.1e})")
        self.uncovered = uncovered


class OrthonormalizationError(ValueError):
    """The Gram matrix of the initial orbitals is numerically singular."""


def dispersion(eps: float, k_squared: np.ndarray) -> np.ndarray:
    """Symbol of the kinetic operator, sqrt(eps^2 |xi|^2 + 1)."""
    return np.sqrt(eps**2 * k_squared + 1.0)


@dataclass(frozen=True)
class MixedState:
    """Density matrix ``rho = sum_j lam_j |psi_j><psi_j|`` on a periodic grid.

    ``orbitals`` has shape ``(J,) + grid.shape``; ``weights`` has shape ``(J,)``.
    """

    grid: SpectralGrid
    eps: float
    weights: np.ndarray
    orbitals: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a finite non-negative vector")
        if self.orbitals.shape != (w.size,) + self.grid.shape:
            raise ValueError(
                f"orbitals shape {self.orbitals.shape} != {(w.size,) + self.grid.shape}"
            )

    @property
    def n_orbitals(self) -> int:
        return int(np.asarray(self.weights).size)

    @property
    def trace(self) -> float:
        return float(np.sum(self.weights))

    @property
    def trace_squared(self) -> float:
        """tr(rho^2) from the weights; exact for orthonormal orbitals."""
        return float(np.sum(np.asarray(self.weights) ** 2))

    def gram(self) -> np.ndarray:
        flat = self.orbitals.reshape(self.n_orbitals, -1)
        return (flat.conj() @ flat.T) * self.grid.cell_volume

    def norms(self) -> np.ndarray:
        axes = tuple(range(1, self.orbitals.ndim))
        return np.sqrt(np.sum(np.abs(self.orbitals) ** 2, axis=axes) * self.grid.cell_volume)

    def with_orbitals(self, orbitals: np.ndarray, t: float | None = None) -> "MixedState":
        return replace(self, orbitals=orbitals, t=self.t if t is None else t)


@dataclass(frozen=True)
class HartreeParams:
    kappa: int
    dt: float
    T: float
    kernel: Kernel = Kernel()
    c_eps: float = 1 / 8

    def __post_init__(self) -> None:
        if self.kappa not in (1, -1):
            raise ValueError(f"kappa must be +1 or -1, got {self.kappa}")
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if self.T < 0:
            raise ValueError("final time must be non-negative")
        if self.T > 0 and self.dt > self.T * (1 + 1e-12):
            raise ValueError(f"time step {self.dt} exceeds final time {self.T}")

    def check_step(self, eps: float) -> None:
        if self.dt > self.c_eps * eps * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds c_eps*eps={self.c_eps * eps}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


class FieldSolver:
    """Maps a density to its self-consistent potential.

    With ``debug=True`` the Coulomb residual bound is checked on every call.
    """

    def __init__(self, grid: SpectralGrid, kappa: int, kernel: Kernel | None = None, debug: bool = False):
        self.grid = grid
        self.kappa = kappa
        self.kernel = kernel or Kernel()
        self.debug = debug

    def __call__(self, n: np.ndarray) -> np.ndarray:
        V = solve_field(n, self.kappa, self.grid, self.kernel)
        if not np.all(np.isfinite(V)):
            raise FieldSolverError("non-finite potential")
        if self.debug and self.kernel.kind == "coulomb":
            res = poisson_residual(n, V, self.kappa, self.grid)
            if res > 1e-9 * max(np.max(np.abs(n)), 1e-300):
                raise FieldSolverError(f"Poisson residual {res:.3e} above bound")
        return V


# -- initial data -----------------------------------------------------------------


@dataclass(frozen=True)
class CoherentLattice:
    centers_x: np.ndarray  # (J, d)
    centers_xi: np.ndarray  # (J, d)
    spacing_x: np.ndarray  # (d,)
    spacing_xi: np.ndarray  # (d,)
    weights: np.ndarray  # (J,) before normalization
    uncovered: float


def coherent_lattice(
    profile: GaussianProfile,
    eps: float,
    J: int | Sequence[int] | None = None,
    cell_factor: float = 1.25,
    nsig: float = 6.0,
    prune: float = 1e-9,
) -> CoherentLattice:
    """Phase-space lattice of coherent-state centres covering ``profile``.

    ``J`` gives the number of centres per axis pair, either one count used
    for both x and xi or a pair ``(J_x, J_xi)``. Without ``J`` the cell area
    per axis pair is ``cell_factor * 2 pi eps`` (``cell_factor > 1`` keeps the
    Gaussians linearly independent), shaped like the profile's bounding box.
    """
    d = profile.dim
    x_lo, x_hi, xi_lo, xi_hi = profile.bounding_box(nsig)
    wx, wxi = x_hi - x_lo, xi_hi - xi_lo
    if J is None:
        area = cell_factor * 2 * np.pi * eps
        ratio = wx / wxi
        ax, axi = np.sqrt(area * ratio), np.sqrt(area / ratio)
        jx = np.maximum(1, np.floor(wx / ax)).astype(int)
        jxi = np.maximum(1, np.floor(wxi / axi)).astype(int)
    else:
        pair = np.broadcast_to(np.asarray(J, dtype=int), (2,))
        jx = np.full(d, pair[0])
        jxi = np.full(d, pair[1])
        if np.any(jx < 1) or np.any(jxi < 1):
            raise ValueError("J must be at least 1 per axis")
    sx, sxi = wx / jx, wxi / jxi
    axes = []
    for a in range(d):
        axes.append(x_lo[a] + sx[a] * (np.arange(jx[a]) + 0.5))
    for a in range(d):
        axes.append(xi_lo[a] + sxi[a] * (np.arange(jxi[a]) + 0.5))
    pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    cx, cxi = pts[:, :d], pts[:, d:]
    values = profile(list(cx.T), list(cxi.T))
    keep = values > prune * values.max() if values.max() > 0 else np.zeros(values.shape, bool)
    cx, cxi, values = cx[keep], cxi[keep], values[keep]
    total = profile.mass
    # a packet only reaches ~3 standard deviations of its Wigner function, so cells much
    # larger than the packet leave their corners uncovered
    width = np.sqrt(eps * sx / sxi)
    rx = np.minimum(sx / 2, 3 * width / np.sqrt(2))
    rxi = np.minimum(sxi / 2, 3 * eps / (np.sqrt(2) * width))
    covered = float(np.sum(profile.box_mass(cx - rx, cx + rx, cxi - rxi, cxi + rxi)))
    uncovered = max(0.0, 1.0 - covered / total) if total > 0 else 1.0
    return CoherentLattice(cx, cxi, sx, sxi, values * float(np.prod(sx * sxi)), uncovered)


def _coherent_orbitals(grid: SpectralGrid, eps: float, lattice: CoherentLattice) -> np.ndarray:
    """Periodized Gaussian wave packets centred at the lattice points.

    The packet width along each axis is sqrt(eps * a_x / a_xi); on a square
    lattice this is sqrt(eps).
    """
    width2 = eps * lattice.spacing_x / lattice.spacing_xi
    J = lattice.centers_x.shape[0]
    out = np.ones((J,) + grid.shape, dtype=complex)
    for a in range(grid.dim):
        x = grid.coords(a)[None, :]
        x0 = lattice.centers_x[:, a, None]
        p0 = lattice.centers_xi[:, a, None]
        L = grid.lengths[a]
        factor = np.zeros((J, grid.points[a]), dtype=complex)
        for m in range(-2, 3):
            u = x - x0 + m * L
            factor += np.exp(-(u**2) / (2 * width2[a]) + 1j * p0 * u / eps)
        factor *= (np.pi * width2[a]) ** -0.25
        shape = [J] + [1] * grid.dim
        shape[a + 1] = grid.points[a]
        out = out * factor.reshape(shape)
    return out


def _lowdin(orbitals: np.ndarray, cell_volume: float, cond_max: float = 1e10) -> np.ndarray:
    J = orbitals.shape[0]
    flat = orbitals.reshape(J, -1)
    gram = (flat.conj() @ flat.T) * cell_volume
    evals, evecs = np.linalg.eigh(gram)
    if evals.min() <= 0 or evals.max() / evals.min() > cond_max:
        raise OrthonormalizationError(
            f"Gram matrix near singular (eigenvalues {evals.min():.3e} .. {evals.max():.3e})"
        )
    inv_sqrt = (evecs * evals**-0.5) @ evecs.conj().T
    return (inv_sqrt.T @ flat).reshape(orbitals.shape)


def init_coherent_mixture(
    profile: GaussianProfile,
    eps: float,
    grid: SpectralGrid,
    J: int | Sequence[int] | None = None,
    cell_factor: float = 1.25,
    coverage_tol: float = 1e-3,
    purity_bounds: tuple[float, float] | None = None,
) -> MixedState:
    """Mixed state whose Wigner function approximates ``profile``.

    Gaussian coherent states are placed on a phase-space lattice, weighted by
    the profile value at their centre times the cell area, normalized to the
    profile mass, and orthonormalized symmetrically (Loewdin). The scaled
    purity ``eps**-d * sum(lam**2)`` is stored in ``meta``; with
    ``purity_bounds`` it must fall inside them.
    """
    if profile.dim != grid.dim:
        raise ValueError("profile and grid dimensions differ")
    mass = profile.mass
    if not mass > 0:
        raise ValueError("profile has zero mass")
    x_lo, x_hi, xi_lo, xi_hi = profile.bounding_box(6.0)
    if np.any(x_hi - x_lo > np.array(grid.lengths)):
        # lattice columns would wrap onto each other and the Gram matrix degenerates
        raise ValueError("profile support is wider than the periodic domain")
    k_nyquist = np.pi / np.array(grid.spacing)
    if np.any(np.maximum(np.abs(xi_lo), np.abs(xi_hi)) / eps >= k_nyquist):
        raise RepresentationError("profile momenta exceed the grid Nyquist wavenumber at this eps")
    lattice = coherent_lattice(profile, eps, J, cell_factor=cell_factor)
    if lattice.uncovered > coverage_tol:
        raise CoverageError(lattice.uncovered, coverage_tol)
    weights = lattice.weights * (mass / lattice.weights.sum())
    orbitals = _lowdin(_coherent_orbitals(grid, eps, lattice), grid.cell_volume)
    scaled_purity = float(np.sum(weights**2) / eps**grid.dim)
    if purity_bounds is not None and not purity_bounds[0] <= scaled_purity <= purity_bounds[1]:
        raise ValueError(f"scaled purity {scaled_purity:.3g} outside {purity_bounds}")
    meta = {
        "construction": "coherent-mixture (Loewdin-orthonormalized Gaussian lattice)",
        "n_orbitals": int(weights.size),
        "spacing_x": lattice.spacing_x.tolist(),
        "spacing_xi": lattice.spacing_xi.tolist(),
        "uncovered_mass_fraction": lattice.uncovered,
        "scaled_purity": scaled_purity,
    }
    return MixedState(grid, float(eps), weights, orbitals, 0.0, meta)


# -- dynamics ------------------------------------------------------------------------


def density(state: MixedState) -> np.ndarray:
    """n(x) = sum_j lam_j |psi_j(x)|^2 on the grid."""
    w = np.asarray(state.weights).reshape((-1,) + (1,) * state.grid.dim)
    return np.sum(w * np.abs(state.orbitals) ** 2, axis=0)


def _kinetic_phase(grid: SpectralGrid, eps: float, tau: float) -> np.ndarray:
    return np.exp(-1j * (tau / eps) * dispersion(eps, grid.k_squared))


def kinetic_step(state: MixedState, tau: float, phase: np.ndarray | None = None) -> MixedState:
    """Exact kinetic flow over ``tau``: multiply by exp(-i tau/eps sqrt(eps^2 xi^2 + 1))."""
    if tau == 0:
        return state
    grid = state.grid
    if phase is None:
        phase = _kinetic_phase(grid, state.eps, tau)
    spec = np.fft.fftn(state.orbitals, axes=grid.axes)
    return state.with_orbitals(np.fft.ifftn(spec * phase, axes=grid.axes))


def potential_step(state: MixedState, V: np.ndarray, tau: float) -> MixedState:
    """Exact potential flow: pointwise multiplication by exp(-i tau V / eps)."""
    V = np.asarray(V)
    if np.iscomplexobj(V):
        if np.any(V.imag != 0):
            raise ValueError("potential must be real")
        V = V.real
    if tau == 0:
        return state
    return state.with_orbitals(state.orbitals * np.exp(-1j * (tau / state.eps) * V)[None])


def strang_step(
    state: MixedState,
    params: HartreeParams,
    field_solver: Callable[[np.ndarray], np.ndarray] | None,
    _half_phase: np.ndarray | None = None,
) -> MixedState:
    """One step K(dt/2) V(dt) K(dt/2); ``field_solver=None`` freezes V at zero."""
    dt = params.dt
    if not np.any(np.asarray(state.weights) > 0):
        return replace(state, t=state.t + dt)
    half = kinetic_step(state, dt / 2, _half_phase)
    if field_solver is not None:
        V = field_solver(density(half))
        half = potential_step(half, V, dt)
    out = kinetic_step(half, dt / 2, _half_phase)
    return replace(out, t=state.t + dt)


def evolve(
    state: MixedState,
    params: HartreeParams,
    field_solver: Callable[[np.ndarray], np.ndarray] | None,
    n_steps: int | None = None,
) -> Iterator[MixedState]:
    """Yield the state after each of ``n_steps`` Strang steps (default T/dt)."""
    steps = params.n_steps if n_steps is None else n_steps
    phase = _kinetic_phase(state.grid, state.eps, params.dt / 2)
    for _ in range(steps):
        state = strang_step(state, params, field_solver, phase)
        yield state


# -- checkpoints ----------------------------------------------------------------------


def save_checkpoint(state: MixedState, directory: Path | str, kappa: int | None = None,
                    kernel: Kernel | None = None) -> Path:
    """Per-orbital binary dumps plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    axes = [f"x{a}" for a in range(state.grid.dim)]
    for j in range(state.n_orbitals):
        stem = directory / f"orbital_{j:05d}"
        dump_array(stem, state.orbitals[j], axes=axes, grid=state.grid.to_dict(),
                   extra={"orbital": j})
        names.append(stem.name)
    manifest = {
        "kind": "hartree-checkpoint",
        "eps": state.eps,
        "t": state.t,
        "weights": [float(w) for w in state.weights],
        "grid": state.grid.to_dict(),
        "kappa": kappa,
        "kernel": (kernel or Kernel()).to_dict(),
        "orbitals": names,
        "meta": state.meta,
    }
    write_json(directory / "manifest.json", manifest)
    return directory


def load_checkpoint(directory: Path | str) -> tuple[MixedState, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("kind") != "hartree-checkpoint":
        raise ValueError(f"{directory} is not a Hartree checkpoint")
    grid = SpectralGrid.from_dict(manifest["grid"])
    orbitals = np.stack([load_array(directory / name)[0] for name in manifest["orbitals"]]) \
        if manifest["orbitals"] else np.zeros((0,) + grid.shape, dtype=complex)
    state = MixedState(grid, manifest["eps"], np.array(manifest["weights"], dtype=float),
                       orbitals.astype(complex), manifest["t"], manifest.get("meta", {}))
    return state, manifest
