import numpy as np
import pytest

from relhartree.diagnostics import hartree_energy, kinetic_energy
from relhartree.hartree import (
    CoverageError,
    FieldSolver,
    HartreeParams,
    MixedState,
    OrthonormalizationError,
    density,
    evolve,
    init_coherent_mixture,
    kinetic_step,
    load_checkpoint,
    potential_step,
    save_checkpoint,
    strang_step,
)
from relhartree.profiles import GaussianProfile
from relhartree.spectral import make_grid
from relhartree.wigner import PhaseGrid, TestFunction, weak_pairing, wigner_transform


def random_state(seed, grid, eps=0.25, J=4):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(J, grid.size)) + 1j * rng.normal(size=(J, grid.size))
    q, _ = np.linalg.qr(a.T)
    orbitals = (q.T / np.sqrt(grid.cell_volume)).reshape((J,) + grid.shape)
    return MixedState(grid, eps, rng.random(J), orbitals)


def unit_profile(sx, sxi, cx=0.0, cxi=0.0):
    return GaussianProfile.single(1 / (2 * np.pi * sx * sxi), cx, cxi, sx, sxi)


# -- initial data ---------------------------------------------------------------------


def test_zero_profile_rejected():
    g = make_grid(1, 16.0, 128)
    with pytest.raises(ValueError, match="zero mass"):
        init_coherent_mixture(GaussianProfile.single(0.0, 0, 0, 1, 1), 0.25, g)


def test_single_bump_one_orbital():
    g = make_grid(1, 16.0, 128)
    prof = GaussianProfile.single(2.0, 0.5, 0.2, 0.3, 0.3)
    st = init_coherent_mixture(prof, 0.25, g, J=1)
    assert st.n_orbitals == 1
    assert st.weights[0] == pytest.approx(prof.mass, rel=1e-14)


def test_mixture_is_orthonormal_and_normalized():
    g = make_grid(1, 32.0, 256)
    st = init_coherent_mixture(unit_profile(1.75, 0.5), 0.25, g)
    assert np.max(np.abs(st.gram() - np.eye(st.n_orbitals))) < 1e-8
    assert st.trace == pytest.approx(1.0, rel=1e-14)
    assert st.meta["uncovered_mass_fraction"] < 1e-3


def test_maxwellian_mixture_pairings_within_five_percent():
    # unit-temperature Maxwellian in xi times a Gaussian in x
    eps, L, sx, sxi = 0.25, 32.0, 2.5, 1.0
    g = make_grid(1, L, 256)
    prof = unit_profile(sx, sxi)
    st = init_coherent_mixture(prof, eps, g)
    phase = PhaseGrid.create(g, 7.0, 256)
    f = wigner_transform(st, phase)
    f0 = prof(phase.x_mesh()[0], phase.xi_mesh()[0], period=[L])
    phis = [TestFunction.create(0, 0, sx / 2, sxi / 2),
            TestFunction.create(sx, 0, sx / 2, sxi / 2),
            TestFunction.create(0, sxi, sx / 2, sxi / 2)]
    for phi in phis:
        ref = weak_pairing(f0, phi, phase)
        assert abs(weak_pairing(f, phi) - ref) <= 0.05 * abs(ref)


def test_scaled_purity_bounded_across_sweep():
    g = make_grid(1, 4 * np.pi, 256)
    prof = GaussianProfile.from_dicts([
        dict(weight=1 / (2 * np.pi * 0.4), center_x=-1.0, center_xi=0.4, width_x=0.8, width_xi=0.5),
        dict(weight=1 / (2 * np.pi * 0.4), center_x=1.0, center_xi=-0.4, width_x=0.8, width_xi=0.5),
    ], 1)
    for eps in (0.5, 0.25, 0.125, 0.0625):
        st = init_coherent_mixture(prof, eps, g, purity_bounds=(0.1, 10.0))
        assert 0.1 <= st.meta["scaled_purity"] <= 10.0


def test_coverage_error_reports_uncovered_fraction():
    g = make_grid(1, 16.0, 128)
    with pytest.raises(CoverageError) as info:
        init_coherent_mixture(unit_profile(1.0, 1.0), 0.25, g, J=1, coverage_tol=1e-6)
    assert info.value.uncovered > 1e-6


def test_overcomplete_lattice_fails_orthonormalization():
    g = make_grid(1, 16.0, 256)
    with pytest.raises(OrthonormalizationError):
        init_coherent_mixture(unit_profile(1.0, 1.0), 0.25, g, J=(30, 30))


def test_support_wider_than_domain_rejected():
    g = make_grid(1, 8.0, 128)
    with pytest.raises(ValueError):
        init_coherent_mixture(unit_profile(1.0, 0.5), 0.25, g)


def test_mixed_state_rejects_bad_eps():
    g = make_grid(1, 1.0, 8)
    with pytest.raises(ValueError):
        MixedState(g, 1.0, np.ones(1), np.ones((1, 8), complex))


# -- density ------------------------------------------------------------------------


def test_density_constant_orbital():
    L = 3.0
    g = make_grid(1, L, 16)
    st = MixedState(g, 0.5, np.array([2.0]), np.full((1, 16), 1 / np.sqrt(L), complex))
    assert np.allclose(density(st), 2 / L, atol=1e-15)


def test_density_two_orthonormal_orbitals():
    L = 2 * np.pi
    g = make_grid(1, L, 32)
    x = g.coords(0)
    orb = np.stack([np.exp(1j * x), np.exp(2j * x)]) / np.sqrt(L)
    st = MixedState(g, 0.5, np.ones(2), orb)
    assert np.sum(density(st)) * g.cell_volume == pytest.approx(2.0, rel=1e-14)


def test_density_integral_matches_trace():
    g = make_grid(1, 5.0, 64)
    st = random_state(0, g)
    assert abs(np.sum(density(st)) * g.cell_volume - st.weights.sum()) <= 1e-10


# -- sub-steps --------------------------------------------------------------------------


def test_kinetic_step_identity_and_plane_wave():
    L = 2 * np.pi
    g = make_grid(1, L, 32)
    x = g.coords(0)
    eps, k, tau = 0.5, 2, 0.1
    st = MixedState(g, eps, np.ones(1), (np.exp(1j * k * x) / np.sqrt(L))[None])
    assert np.array_equal(kinetic_step(st, 0.0).orbitals, st.orbitals)
    out = kinetic_step(st, tau).orbitals[0]
    phase = np.exp(-1j * 0.2 * np.sqrt(2))
    assert np.allclose(out, st.orbitals[0] * phase, atol=1e-14)
    assert np.allclose(np.abs(out), np.abs(st.orbitals[0]), atol=1e-15)


def test_potential_step_identity_constant_and_density():
    g = make_grid(1, 5.0, 64)
    st = random_state(1, g)
    assert np.array_equal(potential_step(st, np.zeros(64), 0.3).orbitals, st.orbitals)
    c = 0.7
    out = potential_step(st, np.full(64, c), 0.3)
    assert np.allclose(out.orbitals, st.orbitals * np.exp(-1j * 0.3 / st.eps * c), atol=1e-14)
    V = np.random.default_rng(2).normal(size=64)
    assert np.allclose(density(potential_step(st, V, 0.3)), density(st), rtol=1e-13, atol=1e-15)


def test_potential_step_rejects_complex_potential():
    g = make_grid(1, 5.0, 16)
    st = random_state(2, g, J=2)
    with pytest.raises(ValueError):
        potential_step(st, np.ones(16) * (1 + 0.5j), 0.1)


def test_strang_zero_weights_unchanged():
    g = make_grid(1, 5.0, 32)
    st = random_state(3, g)
    st = MixedState(g, st.eps, np.zeros(st.n_orbitals), st.orbitals)
    out = strang_step(st, HartreeParams(1, 0.01, 1.0), FieldSolver(g, 1))
    assert np.array_equal(out.orbitals, st.orbitals)


def test_strang_without_field_is_kinetic_step():
    g = make_grid(1, 5.0, 64)
    st = random_state(4, g)
    out = strang_step(st, HartreeParams(1, 0.02, 1.0), None)
    assert np.allclose(out.orbitals, kinetic_step(st, 0.02).orbitals, atol=1e-14)


def test_params_invariants():
    with pytest.raises(ValueError):
        HartreeParams(1, 2.0, 1.0)
    with pytest.raises(ValueError):
        HartreeParams(0, 0.1, 1.0)
    with pytest.raises(ValueError):
        HartreeParams(1, 0.1, 1.0).check_step(0.25)
    HartreeParams(1, 0.25 / 16, 1.0).check_step(0.25)


# -- evolution invariants -----------------------------------------------------------------


@pytest.fixture(scope="module")
def run_half():
    eps = 0.25
    g = make_grid(1, 32.0, 256)
    st0 = init_coherent_mixture(unit_profile(1.75, 0.5), eps, g)
    fs = FieldSolver(g, 1)
    states = [st0] + list(evolve(st0, HartreeParams(1, eps / 16, 0.5), fs))
    return st0, states, fs


def test_self_consistent_run_mass_and_energy(run_half):
    st0, states, fs = run_half
    g = st0.grid
    m0 = np.sum(density(st0)) * g.cell_volume
    e0 = hartree_energy(st0, fs)[2]
    for s in states:
        assert abs(np.sum(density(s)) * g.cell_volume - m0) <= 1e-10 * m0
        assert abs(hartree_energy(s, fs)[2] - e0) <= 1e-4 * abs(e0)
    assert states[-1].t == pytest.approx(0.5)


def test_orbitals_stay_orthonormal(run_half):
    st0, states, _ = run_half
    for s in states:
        assert np.max(np.abs(s.gram() - np.eye(s.n_orbitals))) < 1e-6
        assert np.max(np.abs(s.norms() - st0.norms())) < 1e-12
        assert s.trace == st0.trace and s.trace_squared == st0.trace_squared


def test_gauge_covariance():
    eps = 0.25
    g = make_grid(1, 16.0, 128)
    st0 = init_coherent_mixture(unit_profile(1.0, 0.5), eps, g)
    fs = FieldSolver(g, 1)
    shifted = lambda n: fs(n) + 3.0
    p = HartreeParams(1, eps / 16, 0.25)
    a = list(evolve(st0, p, fs))[-1]
    b = list(evolve(st0, p, shifted))[-1]
    assert np.allclose(density(a), density(b), atol=1e-12)
    assert kinetic_energy(a) == pytest.approx(kinetic_energy(b), abs=1e-12)
    overlap = np.einsum("jx,jx->j", a.orbitals.conj(), b.orbitals) * g.cell_volume
    assert np.allclose(np.abs(overlap), 1.0, atol=1e-12)


def test_checkpoint_restart_is_bit_stable(tmp_path):
    eps = 0.25
    g = make_grid(1, 16.0, 128)
    st0 = init_coherent_mixture(unit_profile(1.0, 0.5), eps, g)
    fs = FieldSolver(g, 1)
    p = HartreeParams(1, eps / 16, 0.5)
    straight = list(evolve(st0, p, fs, 8))[-1]
    mid = list(evolve(st0, p, fs, 4))[-1]
    save_checkpoint(mid, tmp_path / "ck", 1)
    loaded, manifest = load_checkpoint(tmp_path / "ck")
    assert manifest["kappa"] == 1 and manifest["eps"] == eps
    assert np.array_equal(loaded.orbitals, mid.orbitals)
    resumed = list(evolve(loaded, p, fs, 4))[-1]
    assert np.array_equal(resumed.orbitals, straight.orbitals)
    assert resumed.t == pytest.approx(straight.t)
