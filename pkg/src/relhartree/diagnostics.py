"""Conserved quantities, energies, Schatten norms and inequality checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .fields import Kernel, grad_potential, potential_energy as _field_energy, solve_field
from .hartree import MixedState, density, dispersion
from .spectral import SpectralGrid, trig_interpolate, Field, make_grid

__all__ = [
    "kinetic_energy",
    "gradient_trace",
    "potential_energy",
    "hartree_energy",
    "density_matrix_kernel",
    "schatten_norm",
    "state_schatten_norm",
    "hilbert_schmidt_squared",
    "wigner_l2_from_state",
    "lp_norm",
    "lt_exponents",
    "lieb_thirring_ratio",
    "dilate_state",
    "dilation_covariance_check",
    "holder_interpolation_check",
    "coulomb_double_integral",
    "sobolev_check",
    "grad_potential_l2",
    "AssumptionConstants",
    "AssumptionReport",
    "assumption_margins",
    "DiagnosticsRecord",
    "hartree_record",
    "DIAGNOSTICS_SCHEMA_VERSION",
]

DIAGNOSTICS_SCHEMA_VERSION = 1


def _spectral_power(state: MixedState) -> np.ndarray:
    """sum_j lam_j |c_j(k)|^2 (2 pi / L)^d per mode, in FFT order."""
    grid = state.grid
    spec = np.fft.fftn(state.orbitals, axes=grid.axes)
    w = np.asarray(state.weights).reshape((-1,) + (1,) * grid.dim)
    return np.sum(w * np.abs(spec) ** 2, axis=0) * grid.cell_volume / grid.size


def kinetic_energy(state: MixedState) -> float:
    """sum_j lam_j <psi_j, sqrt(-eps^2 Lap + 1) psi_j> as a Fourier sum."""
    power = _spectral_power(state)
    return float(np.sum(dispersion(state.eps, state.grid.k_squared) * power))


def gradient_trace(state: MixedState) -> float:
    """tr(|grad| rho), Fourier symbol |xi|."""
    return float(np.sum(np.sqrt(state.grid.k_squared) * _spectral_power(state)))


def potential_energy(state_or_density, field_solver_or_V, grid: SpectralGrid | None = None,
                     kernel: Kernel | None = None) -> float:
    """(1/2) int V (n - nbar) dx for a state (with a field solver) or an (n, V) pair."""
    if isinstance(state_or_density, MixedState):
        grid = state_or_density.grid
        n = density(state_or_density)
    else:
        n = np.asarray(state_or_density)
        if grid is None:
            raise ValueError("grid needed for a raw density")
    if callable(field_solver_or_V):
        V = field_solver_or_V(n)
        kernel = kernel or getattr(field_solver_or_V, "kernel", None)
    else:
        V = np.asarray(field_solver_or_V)
    return _field_energy(n, V, grid, kernel)


def hartree_energy(state: MixedState, field_solver) -> tuple[float, float, float]:
    """(E_kin, E_pot, E_total)."""
    ek = kinetic_energy(state)
    ep = potential_energy(state, field_solver)
    return ek, ep, ek + ep


def density_matrix_kernel(state: MixedState) -> np.ndarray:
    """Dense kernel rho(x_m, x_n) over flattened grid nodes."""
    flat = state.orbitals.reshape(state.n_orbitals, -1)
    return (flat.T * np.asarray(state.weights)) @ flat.conj()


def schatten_norm(kernel: np.ndarray, p: float, cell_volume: float, asym_tol: float = 1e-8) -> float:
    """(sum sigma^p)^(1/p) of the operator with kernel ``K`` and quadrature weight ``cell_volume``.

    The kernel is symmetrized after checking its Hermitian defect.
    """
    K = np.asarray(kernel)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("kernel must be a square matrix")
    if K.shape[0] > 4096:
        raise ValueError("kernel too large for a dense eigendecomposition")
    scale = max(float(np.max(np.abs(K))), 1e-300)
    if np.max(np.abs(K - K.conj().T)) > asym_tol * scale:
        raise ValueError("kernel is not Hermitian")
    H = 0.5 * (K + K.conj().T) * cell_volume
    sigma = np.abs(np.linalg.eigvalsh(H))
    if math.isinf(p):
        return float(sigma.max(initial=0.0))
    return float(np.sum(sigma**p) ** (1.0 / p))


def _weighted_gram_eigs(state: MixedState) -> np.ndarray:
    w = np.sqrt(np.asarray(state.weights, dtype=float))
    mat = (w[:, None] * state.gram()) * w[None, :]
    return np.clip(np.linalg.eigvalsh(0.5 * (mat + mat.conj().T)), 0.0, None)


def state_schatten_norm(state: MixedState, p: float) -> float:
    """Schatten norm from the J x J matrix Lambda^1/2 G Lambda^1/2 (no dense kernel)."""
    ev = _weighted_gram_eigs(state)
    if math.isinf(p):
        return float(ev.max(initial=0.0))
    return float(np.sum(ev**p) ** (1.0 / p))


def hilbert_schmidt_squared(state: MixedState) -> float:
    """||rho||_{L2(x,y)}^2 = sum_jk lam_j lam_k |<psi_j, psi_k>|^2."""
    w = np.asarray(state.weights, dtype=float)
    return float(np.real(w @ (np.abs(state.gram()) ** 2) @ w))


def wigner_l2_from_state(state: MixedState) -> float:
    """||f^eps||_{L2} via (2 pi eps)^(-d/2) ||rho||_{L2}."""
    return math.sqrt(hilbert_schmidt_squared(state) / (2 * math.pi * state.eps) ** state.grid.dim)


def lp_norm(n: np.ndarray, grid: SpectralGrid, p: float) -> float:
    return float((np.sum(np.abs(n) ** p) * grid.cell_volume) ** (1.0 / p))


def lt_exponents(p: float, d: int) -> tuple[float, float]:
    """(q, theta) with q = (d(p-1)+p)/(d(p-1)+1), theta = p/(d(p-1)+p)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    q = (d * (p - 1) + p) / (d * (p - 1) + 1)
    theta = p / (d * (p - 1) + p)
    return q, theta


def lieb_thirring_ratio(state: MixedState, p: float) -> float:
    """||n||_q / (||rho||_{S_p}^theta (tr |grad| rho)^(1-theta))."""
    if not p > 1:
        raise ValueError("the ratio is defined for p > 1")
    q, theta = lt_exponents(p, state.grid.dim)
    num = lp_norm(density(state), state.grid, q)
    den = state_schatten_norm(state, p) ** theta * gradient_trace(state) ** (1 - theta)
    if den == 0:
        raise ZeroDivisionError("zero state has no Lieb-Thirring ratio")
    return num / den


def _edge_ratio(orbitals: np.ndarray, d: int) -> float:
    """max |psi| on the outermost grid layer relative to max |psi|."""
    peak = float(np.max(np.abs(orbitals))) if orbitals.size else 0.0
    if peak == 0:
        return 0.0
    edge = 0.0
    for a in range(d):
        sl = [slice(None)] * (d + 1)
        sl[a + 1] = [0, -1]
        edge = max(edge, float(np.max(np.abs(orbitals[tuple(sl)]))))
    return edge / peak


def dilate_state(state: MixedState, scale: float, tail_tol: float = 1e-10) -> MixedState:
    """psi(x) -> scale^(d/2) psi(scale x) on a grid refined by ceil(scale) (same box).

    Raises ``ValueError`` when the dilated orbitals no longer fit the box.
    """
    grid = state.grid
    refine = 1 << max(0, math.ceil(math.log2(max(scale, 1.0))))
    new = make_grid(grid.dim, grid.lengths, [n * refine for n in grid.points], origin=grid.origin)
    mesh = np.meshgrid(*[new.coords(a) for a in range(grid.dim)], indexing="ij")
    pts = np.stack([m.ravel() * scale for m in mesh], axis=-1)
    # reading beyond the original box would pick up periodic images
    inside = np.ones(len(pts), dtype=bool)
    for a in range(grid.dim):
        lo, hi = grid.origin[a], grid.origin[a] + grid.lengths[a]
        inside &= (pts[:, a] >= lo - 1e-12) & (pts[:, a] <= hi + 1e-12)
    if scale < 1 and not inside.all():
        raise ValueError("dilated point set leaves the original box")
    if not inside.all() and _edge_ratio(state.orbitals, grid.dim) > tail_tol:
        raise ValueError("orbitals are not negligible at the domain boundary")
    flat = np.zeros((state.n_orbitals, len(pts)), dtype=complex)
    flat[:, inside] = trig_interpolate(Field(grid, state.orbitals), pts[inside])
    vals = flat.reshape((state.n_orbitals,) + new.shape)
    vals = vals * scale ** (grid.dim / 2)
    if _edge_ratio(vals, grid.dim) > tail_tol:
        raise ValueError("dilated orbitals reach the domain boundary")
    return MixedState(new, state.eps, np.asarray(state.weights), vals.astype(complex), state.t, dict(state.meta))


def dilation_covariance_check(state: MixedState, p: float, scale: float) -> float:
    """|ratio(scale) - ratio(1)| / ratio(1) for the Lieb-Thirring ratio."""
    base = lieb_thirring_ratio(state, p)
    if scale == 1:
        return 0.0
    return abs(lieb_thirring_ratio(dilate_state(state, scale), p) - base) / base


def holder_interpolation_check(n: np.ndarray, grid: SpectralGrid) -> tuple[float, float, bool]:
    """(||n||_{6/5}, ||n||_1^{1/6} ||n||_{5/4}^{5/6}, lhs <= rhs)."""
    lhs = lp_norm(n, grid, 6 / 5)
    rhs = lp_norm(n, grid, 1.0) ** (1 / 6) * lp_norm(n, grid, 5 / 4) ** (5 / 6)
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-12))


def coulomb_double_integral(n: np.ndarray, grid: SpectralGrid) -> float:
    """int int n(x) n(y) / |x - y| on a 3-d torus (background-neutralized, 4 pi int V n)."""
    if grid.dim != 3:
        raise ValueError("the Coulomb double integral is defined here for d = 3")
    V = solve_field(n, 1, grid)
    return 4 * math.pi * float(np.sum(V * (n - n.mean()))) * grid.cell_volume


def sobolev_check(n: np.ndarray, grid: SpectralGrid, C_s: float) -> dict:
    """Report int int nn/|x-y| against C_s ||n||_{6/5}^2; never raises on violation."""
    lhs = coulomb_double_integral(n, grid)
    rhs = C_s * lp_norm(n, grid, 6 / 5) ** 2
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs)}


def grad_potential_l2(V: np.ndarray, grid: SpectralGrid) -> float:
    g = grad_potential(V, grid)
    return float(np.sqrt(np.sum(g**2) * grid.cell_volume))


@dataclass(frozen=True)
class AssumptionConstants:
    """User-supplied constants of the Sobolev and Lieb-Thirring (p=2) inequalities."""

    C_s: float
    C_2: float
    provenance: str = "user-supplied"

    def __post_init__(self) -> None:
        if not (self.C_s > 0 and self.C_2 > 0):
            raise ValueError("constants must be positive")

    @property
    def c_star(self) -> float:
        return (8 * math.pi) ** 3 / (self.C_s**3 * self.C_2**5)


@dataclass(frozen=True)
class AssumptionReport:
    trace: float
    scaled_purity: float
    kinetic_energy: float
    wigner_l2: float
    zero_mass: bool
    c_tilde: float | None = None
    margin: float | None = None
    condition_b_lhs: float | None = None
    condition_b_rhs: float | None = None
    enforced: bool = False
    passes: bool = True
    provenance: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def assumption_margins(state: MixedState, kappa: int, constants: AssumptionConstants | None = None) -> AssumptionReport:
    """Uniform-bound quantities of the initial datum and the attractive-case margin.

    ``c_tilde = C_s C_2^(5/3) tr(rho)^(1/3) ||f||_2^(2/3)`` and ``margin = 8 pi - c_tilde``.
    The margin is binding only for ``d = 3`` and ``kappa = -1``; in other
    dimensions it is informational.
    """
    d = state.grid.dim
    trace = state.trace
    purity = hilbert_schmidt_squared(state) / state.eps**d
    ekin = kinetic_energy(state)
    fl2 = wigner_l2_from_state(state)
    zero = trace == 0
    if constants is None:
        if kappa == -1 and d == 3:
            raise ValueError("kappa = -1 in three dimensions needs C_s and C_2")
        return AssumptionReport(trace, purity, ekin, fl2, zero)
    c_tilde = constants.C_s * constants.C_2 ** (5 / 3) * trace ** (1 / 3) * fl2 ** (2 / 3)
    margin = 8 * math.pi - c_tilde
    rhs = constants.c_star / trace if trace > 0 else math.inf
    enforced = kappa == -1 and d == 3
    passes = margin > 0 if kappa == -1 else True
    return AssumptionReport(trace, purity, ekin, fl2, zero, c_tilde, margin, purity, rhs,
                            enforced, passes, constants.provenance)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    trace: float
    trace_squared: float
    scaled_purity: float
    kinetic: float
    potential: float
    total: float
    wigner_l2: float
    grad_v_l2: float
    n_l1: float
    n_l54: float
    n_l65: float
    holder_ok: bool
    max_norm_defect: float
    gram_defect: float
    margin: float | None = None

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, name) for name in self.header()]

    def to_dict(self) -> dict:
        return asdict(self)


def hartree_record(state: MixedState, field_solver: Callable[[np.ndarray], np.ndarray],
                   initial_norms: np.ndarray | None = None, margin: float | None = None) -> DiagnosticsRecord:
    grid = state.grid
    n = density(state)
    V = field_solver(n) if field_solver is not None else np.zeros(grid.shape)
    kernel = getattr(field_solver, "kernel", None)
    ek = kinetic_energy(state)
    ep = _field_energy(n, V, grid, kernel) if field_solver is not None else 0.0
    norms = state.norms()
    ref = np.ones_like(norms) if initial_norms is None else initial_norms
    gram = state.gram()
    _, _, holder = holder_interpolation_check(n, grid)
    tr2 = hilbert_schmidt_squared(state)
    return DiagnosticsRecord(
        t=state.t,
        trace=state.trace,
        trace_squared=state.trace_squared,
        scaled_purity=tr2 / state.eps**grid.dim,
        kinetic=ek,
        potential=ep,
        total=ek + ep,
        wigner_l2=wigner_l2_from_state(state),
        grad_v_l2=grad_potential_l2(V, grid),
        n_l1=lp_norm(n, grid, 1.0),
        n_l54=lp_norm(n, grid, 5 / 4),
        n_l65=lp_norm(n, grid, 6 / 5),
        holder_ok=holder,
        max_norm_defect=float(np.max(np.abs(norms - ref), initial=0.0)),
        gram_defect=float(np.max(np.abs(gram - np.eye(gram.shape[0])), initial=0.0)),
        margin=margin,
    )
