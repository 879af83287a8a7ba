import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from sgd_limits.cli import main
from sgd_limits.config import ExperimentConfig, load_config
from sgd_limits.errors import ConfigurationError

DEMO_CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("label,k", [("h3", 3), ("identity", 1), ("purified", 3)])
def test_hermite(tmp_path, capsys, label, k):
    cfg = write(tmp_path, f'[activation]\nlabel = "{label}"\n')
    code, out, _ = run(capsys, "hermite", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 0
    assert f"information exponent: {k}" in out
    rows = read_csv(tmp_path / "o" / "hermite.csv")
    assert rows[0] == ["k", "a_k"] and len(rows) == 10
    if label == "purified":
        assert abs(float(rows[2][1])) < 1e-8


def test_hermite_scan_failure_names_activation(tmp_path, capsys):
    cfg = write(tmp_path, '[activation]\nlabel = "purified"\ng1 = "tanh"\ng2 = "tanh"\n')
    code, _, err = run(capsys, "hermite", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 2 and "purified(tanh,tanh)" in err


def test_compare_smoke(tmp_path, capsys):
    cfg = write(tmp_path, 'N_list = [64]\nn_seeds = 2\nt_end = 0.05\ndt = 0.01\n')
    code, out, _ = run(capsys, "compare", "--config", cfg, "--out", str(tmp_path / "o"), "--svg")
    assert code == 0
    o = tmp_path / "o"
    assert read_csv(o / "compare_summary.csv")[0] == ["N", "n_seeds", "sup_dev_m", "sup_dev_r2"]
    traj = read_csv(o / "trajectory_N64.csv")
    assert traj[0] == ["t", "m_mean", "m_var", "r2_mean", "r2_var", "mtilde_mean", "mtilde_var", "n_seeds", "N"]
    assert all(len(r) == 9 for r in traj) and traj[1][-2:] == ["2", "64"]
    assert (o / "compare_N64.svg").read_text().startswith("<svg")
    manifest = json.loads((o / "manifest.json").read_text())
    assert {"ode.csv", "compare_summary.csv", "deviation_N64.csv"} <= set(manifest["outputs"])


def test_compare_flags_non_decreasing_deviation(tmp_path, capsys):
    cfg = write(tmp_path, 'N_list = [2000, 100]\nn_seeds = 50\nt_end = 1.0\ndt = 0.01\n')
    code, _, err = run(capsys, "compare", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 4 and "do not decrease" in err
    assert len(read_csv(tmp_path / "o" / "compare_summary.csv")) == 3


def test_compare_h3_diverges(tmp_path, capsys):
    cfg = write(tmp_path, '[activation]\nlabel = "h3"\n')
    code, _, err = run(capsys, "compare", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 3 and "divergence" in err
    assert read_csv(tmp_path / "o" / "divergence.csv")[0] == ["what", "time", "last_state"]


def test_ode_h3_divergence_demo(tmp_path, capsys):
    code, _, _ = run(capsys, "ode", "--config", str(DEMO_CONFIGS / "h3_divergence.toml"),
                     "--out", str(tmp_path / "o"))
    assert code == 3


def test_fixed_point_report(tmp_path, capsys):
    cfg = write(tmp_path, 'bracket = [1e-4, 0.1]\n')
    code, out, _ = run(capsys, "fixed-point", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 0
    q = dict(read_csv(tmp_path / "o" / "fixed_point.csv")[1:])
    assert abs(float(q["r2_star"]) - 0.0015722362309694292) < 1e-10
    assert float(q["stationary_var"]) == float(q["vol"]) ** 2 / (2 * float(q["theta"]))


def test_missing_fixed_point_gives_guidance(tmp_path, capsys):
    cfg = write(tmp_path, 'noise_var = 0.25\n')
    code, _, err = run(capsys, "ou-check", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 2 and "bracket" in err


def test_ou_check_small(tmp_path, capsys):
    cfg = write(tmp_path, 'N = 1024\nn_seeds = 100\nbracket = [1e-4, 0.1]\nt_end = 2.0\ncheckpoints = [1.0, 2.0]\n')
    code, out, _ = run(capsys, "ou-check", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code in (0, 4)
    assert "stationary_var = vol^2/(2 theta)" in out
    assert "theorem_statement" in out and "proof_form" in out
    rows = read_csv(tmp_path / "o" / "ou_check.csv")
    assert rows[0][:3] == ["t", "D", "p_value"] and len(rows) == 3


def test_sde_and_diagnose_run(tmp_path, capsys):
    cfg = write(tmp_path, 'n_seeds = 20\nt_end = 0.2\nN_list = [64, 128]\nn_samples = 1000\n')
    assert run(capsys, "sde", "--config", cfg, "--out", str(tmp_path / "s"))[0] == 0
    assert read_csv(tmp_path / "s" / "sde.csv")[0] == ["t", "mtilde_mean", "mtilde_var", "r2", "n_paths"]
    assert run(capsys, "diagnose", "--config", cfg, "--out", str(tmp_path / "d"))[0] == 0
    assert read_csv(tmp_path / "d" / "diagnose.csv")[0][0] == "N"


@pytest.mark.parametrize("cmd", ["sgd", "sde", "compare", "diagnose"])
def test_manifest_reproduces_csv_bytes(tmp_path, capsys, cmd):
    cfg = write(tmp_path, 'n_seeds = 6\nt_end = 0.3\ndt = 0.01\nN = 128\nN_list = [64, 128]\nn_samples = 2000\n'
                          'noise_var = 0.1\n')
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, cmd, "--config", cfg, "--out", str(a), "--seed", "17", "--threads", "2")[0] == 0
    assert run(capsys, cmd, "--config", str(a / "manifest.json"), "--out", str(b))[0] == 0
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 17 and man["artifact_version"] and man["config"]["seed"] == 17
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs and csvs == sorted(p.name for p in b.glob("*.csv"))
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_threads_do_not_change_outputs(tmp_path, capsys):
    cfg = write(tmp_path, 'n_seeds = 9\nt_end = 0.5\nN = 256\n')
    run(capsys, "sgd", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1")
    run(capsys, "sgd", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "4")
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


@pytest.mark.parametrize("text", [
    "bogus_key = 1\n",
    "N = 4\n",
    "noise_var = -1.0\n",
    "n_seeds = 1\n",
    "sigma_variant = 'guess'\n",
    "[activation]\nlabel = 'relu'\n",
    "[activation]\nlabel = 'tanh'\ng1 = 'erf'\n",
    "t_end = 'long'\n",
    "N = [",
])
def test_config_errors_exit_2(tmp_path, capsys, text):
    code, _, err = run(capsys, "sgd", "--config", write(tmp_path, text), "--out", str(tmp_path / "o"))
    assert code == 2 and "configuration error" in err


def test_cli_usage_errors(tmp_path, capsys):
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "sgd", "--config", str(tmp_path / "missing.toml"))[0] == 2
    assert run(capsys, "sgd", "--threads", "0", "--out", str(tmp_path / "o"))[0] == 2
    cfg = write(tmp_path, 'experiment = "ode"\n')
    assert run(capsys, "sgd", "--config", cfg, "--out", str(tmp_path / "o"))[0] == 2


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(N_list=(64, 128), u0=(0.0, 2.0), activation={"label": "purified", "g1": "erf"})
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"artifact_version": "x", "config": cfg.to_dict()}))
    assert load_config(p) == cfg
    with pytest.raises(ConfigurationError):
        ExperimentConfig(checkpoints=(0.0, 1.0))


@pytest.mark.parametrize("path", sorted(DEMO_CONFIGS.glob("*.toml")))
def test_demo_configs_load(path):
    load_config(path)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sgd_limits", "hermite", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "information exponent: 3" in proc.stdout
