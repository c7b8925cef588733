import json

import numpy as np
import pytest

from relhartree.cli import main
from relhartree.config import ConfigError, RunConfig, load_config

pytestmark = pytest.mark.filterwarnings("ignore::relhartree.wigner.XiBoundaryWarning")

BASE = dict(
    d=1,
    grid=dict(L=4 * np.pi, N_x=128, N_xi=128, xi_max=5.0),
    eps=[0.25],
    profile=[dict(weight=0.2, center_x=-1.0, center_xi=0.5, width_x=1.0, width_xi=0.5)],
    T=0.25,
)


def write(tmp_path, name="run.json", **changes):
    raw = dict(BASE, **changes)
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, colour="blue"))
    raw = dict(BASE, grid=dict(BASE["grid"], Nx=3))
    with pytest.raises(Exception):
        RunConfig.model_validate(raw)


@pytest.mark.parametrize("eps", [[0.5, 0.125], [0.25, 0.5], [1.0], [0.5, 0.25, 0.25], []])
def test_eps_list_validation(tmp_path, eps):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, eps=eps))


def test_sample_times_validation(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, sample_times=[0.0, 0.5]))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, sample_times=[0.25, 0.0]))
    assert load_config(write(tmp_path)).times == [0.0, 0.25]


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_hash_tracks_content(tmp_path):
    a = load_config(write(tmp_path))
    b = load_config(write(tmp_path, name="b.json"))
    c = load_config(write(tmp_path, name="c.json", T=0.5))
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_shipped_configs_load():
    for name in ("conservation", "sweep_repulsive", "sweep_attractive"):
        cfg = load_config(f"configs/{name}.json")
        assert cfg.d == 1
    assert load_config("configs/sweep_attractive.json").build_constants().provenance


def test_missing_config_exits_2(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "missing.json")]) == 2


def test_bad_arguments_exit_2():
    assert main(["sweep"]) == 2
    assert main(["launch"]) == 2


def test_seed_out_of_range_exits_2(tmp_path):
    assert main(["hartree", "--config", str(write(tmp_path)), "--seed", str(2**64)]) == 2


def test_hartree_then_check(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["hartree", "--config", str(write(tmp_path)), "--out", str(out), "--seed", "7"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["float_format"] == "%.17g"
    for name in ("diagnostics.csv", "pairings.csv"):
        assert (out / name).exists()
    capsys.readouterr()
    assert main(["check", str(out / "checkpoint_eps0.25")]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["trace"] == pytest.approx(0.2 * 2 * np.pi * 0.5, rel=1e-10)
    assert record["t"] == pytest.approx(0.25)


def test_check_rejects_non_checkpoint(tmp_path):
    assert main(["check", str(tmp_path)]) == 2


def test_runs_are_bit_identical(tmp_path):
    cfg = write(tmp_path)
    for name in ("a", "b"):
        assert main(["hartree", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    for csv in ("diagnostics.csv", "pairings.csv"):
        assert (tmp_path / "a" / csv).read_bytes() == (tmp_path / "b" / csv).read_bytes()


def test_vlasov_command(tmp_path):
    out = tmp_path / "v"
    assert main(["vlasov", "--config", str(write(tmp_path)), "--out", str(out)]) == 0
    header = (out / "diagnostics.csv").read_text().splitlines()[0]
    assert header == "t,mass,kinetic,potential,total"


def test_sweep_and_report(tmp_path, capsys):
    cfg = write(tmp_path, eps=[0.5, 0.25, 0.125], T=0.0, coupling=False, vlasov_error_estimate=False)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    assert "monotone=True" in capsys.readouterr().out
    again = tmp_path / "again"
    assert main(["report", str(out), "--out", str(again)]) == 0
    assert (again / "distances.csv").read_bytes() == (out / "distances.csv").read_bytes()
    assert (again / "pairings.csv").read_bytes() == (out / "pairings.csv").read_bytes()
    assert json.loads((again / "summary.json").read_text())["monotone"] is True


def test_report_without_report_json(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_unrepresentable_profile_exits_2(tmp_path):
    cfg = write(tmp_path, grid=dict(L=8.0, N_x=64, N_xi=128, xi_max=5.0),
                profile=[dict(weight=0.2, width_x=1.0, width_xi=0.5)])
    assert main(["hartree", "--config", str(cfg)]) == 2


def test_numerical_failure_exits_3(tmp_path):
    # one coherent state cannot cover the profile to the requested tolerance
    cfg = write(tmp_path, coherent=dict(J=1, coverage_tol=1e-9))
    assert main(["hartree", "--config", str(cfg)]) == 3
