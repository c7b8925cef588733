"""Run orchestration: Hartree trajectories, the Vlasov reference and the eps sweep."""

from __future__ import annotations

import csv
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .config import SCHEMA_VERSION, ConfigError, RunConfig
from .diagnostics import (
    DIAGNOSTICS_SCHEMA_VERSION,
    AssumptionReport,
    DiagnosticsRecord,
    assumption_margins,
    hartree_record,
    holder_interpolation_check,
    kinetic_energy,
)
from .hartree import FieldSolver, HartreeParams, MixedState, _kinetic_phase, init_coherent_mixture, save_checkpoint, strang_step
from .io import dump_array, format_float, write_json
from .vlasov import classical_energy, initial_vlasov_state, vlasov_strang_step
from .wigner import PhaseGrid, TestFunction, WignerGrid, marginal_density, weak_pairing, wigner_transform

__all__ = [
    "AssumptionError",
    "BlowUpError",
    "HartreeTrajectory",
    "VlasovTrajectory",
    "RunReport",
    "run_hartree",
    "run_vlasov",
    "epsilon_sweep",
    "write_pairings_csv",
    "write_diagnostics_csv",
    "write_manifest",
]

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e3
INIT_FAMILY = "coherent-mixture (our construction; the source gives no initial-data family)"


class AssumptionError(ValueError):
    """The attractive-case smallness condition fails and was not overridden."""


class BlowUpError(RuntimeError):
    """Kinetic energy grew past the blow-up threshold in an attractive run."""


def _step_count(t: float, dt: float) -> int:
    n = round(t / dt)
    if abs(n * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ConfigError(f"sample time {t} is not a multiple of the step {dt}")
    return int(n)


def _pairings(f: WignerGrid | np.ndarray, phis: list[TestFunction], phase: PhaseGrid) -> np.ndarray:
    return np.array([weak_pairing(f, phi, phase) for phi in phis])


@dataclass
class HartreeTrajectory:
    eps: float
    times: list[float]
    pairings: np.ndarray  # (n_t, M)
    records: list[DiagnosticsRecord]
    snapshots: list[WignerGrid]
    final_state: MixedState
    assumption: AssumptionReport
    wall_clock: float
    n_orbitals: int
    init_meta: dict = field(default_factory=dict)

    def conservation_summary(self) -> dict:
        r0 = self.records[0]
        return {
            "trace_drift": max(abs(r.trace - r0.trace) for r in self.records),
            "trace_squared_drift": max(abs(r.trace_squared - r0.trace_squared) for r in self.records),
            "max_norm_defect": max(r.max_norm_defect for r in self.records),
            "wigner_l2_rel_drift": max(abs(r.wigner_l2 - r0.wigner_l2) for r in self.records) / r0.wigner_l2
            if r0.wigner_l2 else 0.0,
            "energy_rel_drift": max(abs(r.total - r0.total) for r in self.records) / abs(r0.total)
            if r0.total else 0.0,
            "holder_ok": all(r.holder_ok for r in self.records),
            "max_xi_boundary_fraction": max((s.boundary_fraction for s in self.snapshots), default=0.0),
            "max_grad_v_l2": max(r.grad_v_l2 for r in self.records),
        }


@dataclass
class VlasovTrajectory:
    times: list[float]
    pairings: np.ndarray
    mass: list[float]
    kinetic: list[float]
    potential: list[float]
    lost_mass: float
    negativity: float
    snapshots: list[WignerGrid]
    holder_ok: bool
    dt: float
    wall_clock: float

    @property
    def total_energy(self) -> list[float]:
        return [k + p for k, p in zip(self.kinetic, self.potential)]

    def conservation_summary(self) -> dict:
        m0, e0 = self.mass[0], self.total_energy[0]
        return {
            "mass_rel_drift": max(abs(m - m0) for m in self.mass) / m0 if m0 else 0.0,
            "energy_rel_drift": max(abs(e - e0) for e in self.total_energy) / abs(e0) if e0 else 0.0,
            "lost_mass": self.lost_mass,
            "negativity": self.negativity,
            "holder_ok": self.holder_ok,
        }


def _check_assumption(config: RunConfig, state: MixedState, override: bool) -> AssumptionReport:
    try:
        report = assumption_margins(state, config.kappa, config.build_constants())
    except ValueError as exc:
        if not override:
            raise AssumptionError(str(exc)) from exc
        log.warning("ASSUMPTION (B) NOT CHECKED: %s; continuing because of the override flag", exc)
        # only the d = 3 attractive case without constants reaches this branch
        return AssumptionReport(state.trace, float("nan"), kinetic_energy(state), float("nan"), state.trace == 0)
    if config.kappa == -1 and report.margin is not None and not report.margin > 0:
        message = f"attractive-case margin {report.margin:.6g} is not positive"
        if report.enforced and not override:
            raise AssumptionError(message)
        log.warning("ASSUMPTION (B) FAILS: %s%s", message, "; overridden" if report.enforced else " (not binding for d != 3)")
    return report


def run_hartree(
    config: RunConfig,
    eps: float,
    *,
    out_dir: Path | str | None = None,
    override_assumption_b: bool = False,
    phase: PhaseGrid | None = None,
    test_functions: list[TestFunction] | None = None,
    dt: float | None = None,
) -> HartreeTrajectory:
    """Coherent-mixture initial datum evolved to ``T`` with Wigner snapshots at the sample times."""
    start = time.perf_counter()
    grid = config.spectral_grid()
    phase = phase or config.phase_grid()
    phis = test_functions if test_functions is not None else config.build_test_functions()
    state = init_coherent_mixture(
        config.build_profile(), eps, grid, config.coherent.J,
        cell_factor=config.coherent.cell_factor, coverage_tol=config.coherent.coverage_tol,
    )
    assumption = _check_assumption(config, state, override_assumption_b)
    dt = dt if dt is not None else config.hartree_dt(eps)
    kernel = config.build_kernel()
    params = HartreeParams(config.kappa, dt, max(config.T, dt), kernel)
    solver = FieldSolver(grid, config.kappa, kernel) if config.coupling else None
    marks = {_step_count(t, dt): t for t in config.times}
    half_phase = _kinetic_phase(grid, eps, dt / 2)
    initial_norms = state.norms()
    e_kin0 = kinetic_energy(state)
    margin = assumption.margin

    records, snapshots, pairings = [], [], []
    out = Path(out_dir) if out_dir is not None else None

    def sample(st: MixedState, t: float) -> None:
        st = MixedState(st.grid, st.eps, st.weights, st.orbitals, t, st.meta)
        rec = hartree_record(st, solver, initial_norms, margin)
        f = wigner_transform(st, phase)
        records.append(rec)
        snapshots.append(f)
        pairings.append(_pairings(f, phis, phase))
        if out is not None:
            k = len(snapshots) - 1
            dump_array(out / f"wigner_eps{eps:g}_t{k:03d}", f.data,
                       axes=[f"x{a}" for a in range(grid.dim)] + [f"xi{a}" for a in range(grid.dim)],
                       representation="phase-space", grid=phase.to_dict(),
                       extra={"eps": eps, "t": t, "imag_residue": f.imag_residue,
                              "boundary_fraction": f.boundary_fraction})

    last = max(marks)
    step = 0
    if 0 in marks:
        sample(state, marks[0])
    while step < last:
        state = strang_step(state, params, solver, half_phase)
        step += 1
        if config.kappa == -1 and config.coupling:
            ek = kinetic_energy(state)
            if e_kin0 > 0 and ek > BLOWUP_FACTOR * e_kin0:
                raise BlowUpError(f"kinetic energy {ek:.6g} exceeds {BLOWUP_FACTOR:g} x initial at t={step * dt:.6g}")
        if step in marks:
            sample(state, marks[step])
    final = MixedState(state.grid, state.eps, state.weights, state.orbitals, step * dt, state.meta)
    if out is not None:
        save_checkpoint(final, out / f"checkpoint_eps{eps:g}", config.kappa, kernel)
    return HartreeTrajectory(
        eps=eps,
        times=[marks[k] for k in sorted(marks)],
        pairings=np.array(pairings),
        records=records,
        snapshots=snapshots,
        final_state=final,
        assumption=assumption,
        wall_clock=time.perf_counter() - start,
        n_orbitals=state.n_orbitals,
        init_meta=dict(state.meta),
    )


def run_vlasov(
    config: RunConfig,
    *,
    dt: float | None = None,
    phase: PhaseGrid | None = None,
    test_functions: list[TestFunction] | None = None,
) -> VlasovTrajectory:
    """Classical reference from the same ``f0`` on a fixed phase-space grid."""
    start = time.perf_counter()
    phase = phase or config.phase_grid()
    phis = test_functions if test_functions is not None else config.build_test_functions()
    dt = dt if dt is not None else config.time_step.vlasov_dt
    kernel = config.build_kernel()
    solver = FieldSolver(phase.x, config.kappa, kernel) if config.coupling else None
    state = initial_vlasov_state(config.build_profile(), phase, config.kappa, kernel, solver)
    marks = {_step_count(t, dt): t for t in config.times}
    pairings, mass, kin, pot, snaps = [], [], [], [], []
    holder_ok = True

    def sample(st) -> None:
        nonlocal holder_ok
        pairings.append(_pairings(st.f, phis, phase))
        mass.append(st.f.mass)
        V = solver(marginal_density(st.f)) if solver is not None else np.zeros(phase.x.shape)
        k, p = classical_energy(st.f, V, kernel)
        kin.append(k)
        pot.append(p if solver is not None else 0.0)
        snaps.append(st.f)
        n = marginal_density(st.f)
        if np.any(n):
            holder_ok = holder_ok and holder_interpolation_check(np.abs(n), phase.x)[2]

    last = max(marks)
    if 0 in marks:
        sample(state)
    for step in range(1, last + 1):
        state = vlasov_strang_step(state, dt, solver)
        if step in marks:
            sample(state)
    return VlasovTrajectory(
        times=[marks[k] for k in sorted(marks)],
        pairings=np.array(pairings),
        mass=mass,
        kinetic=kin,
        potential=pot,
        lost_mass=state.lost_mass,
        negativity=state.negativity,
        snapshots=snaps,
        holder_ok=holder_ok,
        dt=dt,
        wall_clock=time.perf_counter() - start,
    )


@dataclass
class RunReport:
    """Pairing tables, distances and summaries of an eps sweep."""

    eps: list[float]
    times: list[float]
    test_functions: list[dict]
    hartree_pairings: dict[str, list[list[float]]]
    vlasov_pairings: list[list[float]]
    distances: dict[str, list[float]]
    conservation: dict[str, dict]
    vlasov_conservation: dict
    assumption: dict[str, dict]
    vlasov_error_estimate: float | None
    monotone: bool | None
    distance_ratio: float | None
    empirical_orders: list[float | None]
    linearity_defect: float | None
    wall_clock: dict[str, float]
    config_hash: str
    init_family: str = INIT_FAMILY
    n_orbitals: dict[str, int] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    failed: bool = False
    complete: bool = True
    grad_v_ratio: float | None = None

    @staticmethod
    def key(eps: float) -> str:
        return format_float(eps)

    def max_distance(self, eps: float) -> float:
        return max(self.distances[self.key(eps)])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(**data)

    def distance_rows(self) -> list[list]:
        return [[e, t, d] for e in self.eps if self.key(e) in self.distances
                for t, d in zip(self.times, self.distances[self.key(e)])]

    def pairing_rows(self) -> list[list]:
        rows = []
        for e in self.eps:
            table = self.hartree_pairings.get(self.key(e))
            if table is None:
                continue
            for t, values in zip(self.times, table):
                rows.extend([e, t, m, v] for m, v in enumerate(values))
        for t, values in zip(self.times, self.vlasov_pairings):
            rows.extend([0.0, t, m, v] for m, v in enumerate(values))
        return rows

    def write(self, out_dir: Path | str) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "report.json", self.to_dict())
        _write_csv(out / "pairings.csv", ["eps", "t", "phi_id", "value"], self.pairing_rows())
        _write_csv(out / "distances.csv", ["eps", "t", "D"], self.distance_rows())


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return "" if value is None else str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_cell(v) for v in row] for row in rows)


def write_pairings_csv(path: Path | str, rows: list[list]) -> None:
    """Rows ``(eps, t, phi_id, value)``; eps = 0 labels the Vlasov reference."""
    _write_csv(Path(path), ["eps", "t", "phi_id", "value"], rows)


def write_diagnostics_csv(path: Path | str, items: list[tuple[float, DiagnosticsRecord]]) -> None:
    _write_csv(Path(path), ["eps"] + DiagnosticsRecord.header(), [[e] + r.row() for e, r in items])


def write_vlasov_csv(path: Path | str, traj: VlasovTrajectory) -> None:
    rows = [[t, m, k, p, k + p] for t, m, k, p in zip(traj.times, traj.mass, traj.kinetic, traj.potential)]
    _write_csv(Path(path), ["t", "mass", "kinetic", "potential", "total"], rows)


def write_manifest(out_dir: Path | str, config: RunConfig, command: str, extra: dict | None = None) -> None:
    payload = {
        "command": command,
        "config_hash": config.config_hash(),
        "config": config.model_dump(mode="json"),
        "seed": config.seed,
        "schema": {"config": SCHEMA_VERSION, "diagnostics": DIAGNOSTICS_SCHEMA_VERSION},
        "versions": {
            "relhartree": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "float_format": "%.17g",
        "transform_policy": "numpy.fft (pocketfft), serial, fixed reduction order",
    }
    if extra:
        payload.update(extra)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "manifest.json", payload)


def epsilon_sweep(
    config: RunConfig,
    *,
    out_dir: Path | str | None = None,
    override_assumption_b: bool = False,
) -> RunReport:
    """Hartree runs over ``config.eps`` compared with one Vlasov reference."""
    if len(config.eps) < 3:
        raise ConfigError("an eps sweep needs at least three eps values")
    start = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    phase = config.phase_grid()
    phis = config.build_test_functions()
    for phi in phis:
        phi.check_resolved(phase)

    vlasov = run_vlasov(config, phase=phase, test_functions=phis)
    log.info("vlasov reference done in %.1fs", vlasov.wall_clock)
    error_estimate = None
    if config.vlasov_error_estimate:
        fine_phase = PhaseGrid.create(phase.x, phase.xi_max, [2 * n for n in phase.xi_points])
        fine = run_vlasov(config, dt=vlasov.dt / 2, phase=fine_phase, test_functions=phis)
        error_estimate = float(np.max(np.abs(fine.pairings - vlasov.pairings)))

    hartree_pairings, distances, conservation, assumption = {}, {}, {}, {}
    wall = {"vlasov": vlasov.wall_clock}
    failures, n_orb, diag_rows = {}, {}, []
    linearity = 0.0
    for eps in config.eps:
        key = RunReport.key(eps)
        try:
            traj = run_hartree(config, eps, out_dir=out, override_assumption_b=override_assumption_b,
                               phase=phase, test_functions=phis)
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            if isinstance(exc, (ConfigError, AssumptionError)):
                raise
            log.error("eps=%g failed: %s", eps, exc)
            failures[key] = f"{type(exc).__name__}: {exc}"
            continue
        hartree_pairings[key] = traj.pairings.tolist()
        diff = traj.pairings - vlasov.pairings
        distances[key] = np.max(np.abs(diff), axis=1).tolist()
        for k, (fq, fc) in enumerate(zip(traj.snapshots, vlasov.snapshots)):
            direct = _pairings(fq.data - fc.data, phis, phase)
            linearity = max(linearity, float(np.max(np.abs(direct - diff[k]))))
        conservation[key] = traj.conservation_summary()
        assumption[key] = traj.assumption.to_dict()
        wall[key] = traj.wall_clock
        n_orb[key] = traj.n_orbitals
        diag_rows.extend((eps, r) for r in traj.records)
        log.info("eps=%g: J=%d, max D=%.4g, %.1fs", eps, traj.n_orbitals, max(distances[key]), traj.wall_clock)

    complete = not failures
    maxima = [max(distances[RunReport.key(e)]) for e in config.eps if RunReport.key(e) in distances]
    monotone = ratio = None
    orders: list[float | None] = []
    if complete:
        monotone = all(b < a for a, b in zip(maxima, maxima[1:]))
        ratio = maxima[-1] / maxima[0] if maxima[0] > 0 else None
        orders = [math.log2(a / b) if a > 0 and b > 0 else None for a, b in zip(maxima, maxima[1:])]
    grad_v_ratio = None
    first = RunReport.key(config.eps[0])
    if first in conservation and conservation[first]["max_grad_v_l2"] > 0:
        # uniformity of ||grad V||_2 across the sweep, relative to the largest eps
        grad_v_ratio = max(c["max_grad_v_l2"] for c in conservation.values()) / conservation[first]["max_grad_v_l2"]
    wall["total"] = time.perf_counter() - start
    report = RunReport(
        eps=list(config.eps),
        times=list(vlasov.times),
        test_functions=[phi.to_dict() for phi in phis],
        hartree_pairings=hartree_pairings,
        vlasov_pairings=vlasov.pairings.tolist(),
        distances=distances,
        conservation=conservation,
        vlasov_conservation=vlasov.conservation_summary(),
        assumption=assumption,
        vlasov_error_estimate=error_estimate,
        monotone=monotone,
        distance_ratio=ratio,
        empirical_orders=orders,
        linearity_defect=linearity if distances else None,
        wall_clock=wall,
        config_hash=config.config_hash(),
        n_orbitals=n_orb,
        failures=failures,
        failed=not complete,
        complete=complete,
        grad_v_ratio=grad_v_ratio,
    )
    if out is not None:
        write_manifest(out, config, "sweep")
        report.write(out)
        write_diagnostics_csv(out / "diagnostics.csv", diag_rows)
        write_vlasov_csv(out / "vlasov.csv", vlasov)
    return report
