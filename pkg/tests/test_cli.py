import csv
import json
import math
import subprocess
import sys

import pytest

from dnls_gauge.cli import main
from dnls_gauge.spectral import SpectralFunction
from dnls_gauge.studies import ConfigError, StudyConfig, load_config, run_study


def _u(tmp_path, modes, cutoff=None, name="u.json"):
    p = tmp_path / name
    SpectralFunction.from_modes(modes, cutoff=cutoff).save(p)
    return str(p)


def _eval(capsys, *argv):
    code = main(["eval", *argv])
    return code, capsys.readouterr()


def test_eval_examples(tmp_path, capsys):
    code, out = _eval(capsys, "divergence", "--in", _u(tmp_path, {1: 1}))
    assert code == 0 and json.loads(out.out) == -3.0
    code, out = _eval(capsys, "f-n", "--in", _u(tmp_path, {0: 1, 1: 1}))
    assert code == 0 and json.loads(out.out) == 2.0
    code, out = _eval(capsys, "logdet", "--in", _u(tmp_path, {1: 1}), "--alpha", "0.1")
    assert code == 0 and math.isclose(json.loads(out.out), -0.3, rel_tol=1e-12)
    code, out = _eval(capsys, "gauge-potential", "--in", _u(tmp_path, {0: 1, 1: 1}))
    pot = SpectralFunction.from_dict(json.loads(out.out))
    assert code == 0 and pot[1] == -1j and pot[-1] == 1j and pot[0] == 0


def test_eval_sample_is_deterministic(capsys):
    args = ["sample", "--N", "4", "--seed", "9", "--count", "3", "--radius", "2"]
    _, a = _eval(capsys, *args)
    _, b = _eval(capsys, *args)
    assert a.out == b.out
    d = json.loads(a.out)
    assert len(d["samples"]) == 3


@pytest.mark.parametrize(
    "argv",
    [
        ["eval", "divergence"],
        ["eval", "divergence", "--in", "/nonexistent.json"],
        ["eval", "sample"],
        ["eval", "bogus"],
        ["run", "/nonexistent.json"],
    ],
)
def test_invalid_input_exit_code(argv, capsys):
    assert main(argv) == 2


def test_bad_json_and_bad_cutoff(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["eval", "f-n", "--in", str(p)]) == 2
    assert main(["eval", "f-n", "--in", _u(tmp_path, {1: 1}), "--N", "5"]) == 2
    assert main(["eval", "logdet", "--in", _u(tmp_path, {1: 1})]) == 2


def test_numerical_failure_exit_code(tmp_path, capsys):
    p = tmp_path / "big.json"
    p.write_text(json.dumps({"cutoff": 2, "coeffs": [[1e120, 0], [0, 1e120], [1e120, 0], [0, 0], [1e120, 3e119]]}))
    with pytest.warns(RuntimeWarning):
        assert main(["eval", "logdet", "--in", str(p), "--alpha", "1", "--steps", "1"]) == 3


@pytest.mark.parametrize(
    "cfg",
    [
        {"study": "nope", "measure": {"s": 1, "cutoff": 4}},
        {"study": "l2-rate"},
        {"study": "l2-rate", "measure": {"s": -1, "cutoff": 4}},
        {"study": "l2-rate", "measure": {"s": 1, "cutoff": 4}, "params": {"bogus": 1}},
        {"study": "l2-rate", "measure": {"s": 1, "cutoff": 4}, "params": {"M_list": []}},
        [1, 2],
    ],
)
def test_config_validation(cfg):
    with pytest.raises(ConfigError):
        StudyConfig.from_dict(cfg)


def test_config_hash_ignores_output_location():
    d = {"study": "l2-rate", "measure": {"s": 1, "cutoff": 8}, "params": {"M_list": [1, 2, 4], "N_ref": 8}}
    a = StudyConfig.from_dict({**d, "output_dir": "x", "workers": 3})
    b = StudyConfig.from_dict(d)
    assert a.config_hash() == b.config_hash()
    c = StudyConfig.from_dict({**d, "params": {"M_list": [1, 2, 4], "N_ref": 7}})
    assert c.config_hash() != a.config_hash()


def _write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_run_l2_rate_is_reproducible(tmp_path, capsys):
    cfg = {"study": "l2-rate", "measure": {"s": 1.0, "cutoff": 8}, "params": {"M_list": [1, 2, 4], "N_ref": 8}}
    p = _write_cfg(tmp_path, cfg)
    assert main(["run", p, "--output-dir", str(tmp_path / "a")]) == 0
    assert main(["run", p, "--output-dir", str(tmp_path / "b")]) == 0
    [da] = (tmp_path / "a").iterdir()
    [db] = (tmp_path / "b").iterdir()
    for f in ("results.csv", "rate_table.csv", "manifest.json"):
        assert (da / f).read_bytes() == (db / f).read_bytes()
    header = (da / "results.csv").read_text().splitlines()[0]
    assert header == "config_hash,statistic,value,stderr,n,seed"


def test_manifest_rerun_is_byte_identical(tmp_path, capsys):
    cfg = {"study": "invariants", "measure": {"s": 1.0, "cutoff": 8, "radius": 1.0, "master_seed": 1},
           "params": {"n_samples": 2, "N": 4}}
    d = run_study(StudyConfig.from_dict({**cfg, "output_dir": str(tmp_path / "first")}))
    again = load_config(d / "manifest.json")
    again.output_dir = str(tmp_path / "second")
    d2 = run_study(again)
    assert d.name == d2.name
    assert (d / "results.csv").read_bytes() == (d2 / "results.csv").read_bytes()


def test_density_alpha_zero_has_zero_z(tmp_path):
    cfg = {"study": "density", "measure": {"s": 1.0, "cutoff": 4, "radius": 1.0},
           "params": {"n_samples": 10000, "sweep": [{"test_set": {"kind": "hs_ball", "params": {"radius": 0.5}}, "alpha": 0.0, "N": 4}]},
           "output_dir": str(tmp_path)}
    d = run_study(StudyConfig.from_dict(cfg))
    with open(d / "results.csv") as fh:
        rows = {r["statistic"]: float(r["value"]) for r in csv.DictReader(fh)}
    assert rows["z_score[0:hs_ball,N=4,alpha=0.0]"] == 0.0
    assert rows["lhs[0:hs_ball,N=4,alpha=0.0]"] == rows["rhs[0:hs_ball,N=4,alpha=0.0]"]
    assert rows["fraction_abs_z_le_3"] == 1.0


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DNLS_GAUGE_OUTPUT_DIR", str(tmp_path))
    cfg = StudyConfig.from_dict({"study": "l2-rate", "measure": {"s": 1, "cutoff": 4}, "params": {"M_list": [1, 2, 3], "N_ref": 4}})
    assert cfg.out_dir() == tmp_path


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "dnls_gauge", "eval", "divergence", "--in", _u(tmp_path, {2: 1})],
        capture_output=True, text=True, check=False,
    )
    assert r.returncode == 0
    assert math.isclose(json.loads(r.stdout), -25 / 6, rel_tol=1e-15)
