import numpy as np
import pytest

from relhartree.hartree import MixedState


def bandlimited_state(rng, grid, eps, J=4, band=0.25):
    """Random orthonormal orbitals with Fourier support |k| < band * N per axis."""
    shape = (J,) + grid.shape
    coeffs = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    for a in range(grid.dim):
        idx = np.fft.fftfreq(grid.points[a]) * grid.points[a]
        keep = np.abs(idx) < band * grid.points[a]
        sl = [1] * (grid.dim + 1)
        sl[a + 1] = -1
        coeffs = coeffs * keep.reshape(sl)
    orb = np.fft.ifftn(coeffs, axes=tuple(range(1, grid.dim + 1))).reshape(J, -1)
    q, _ = np.linalg.qr(orb.T)
    orbitals = (q.T / np.sqrt(grid.cell_volume)).reshape(shape)
    return MixedState(grid, eps, rng.random(J) + 0.1, orbitals)


@pytest.fixture
def random_state_factory():
    return bandlimited_state


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """record(criterion, ok, detail) collects one summary line per acceptance criterion."""
    results = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        results[criterion] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
