import json
from pathlib import Path

import jsonschema
import pytest

import calore
from calore.cli import main
from calore.domain.models import RunManifest, StabilityReport
from calore.storage.repository import CURVE_HEADER, read_csv

CONTRACTS = Path(calore.__file__).parent / "contracts"

SMALL = """
[system]
n = 4
m = 4
beta0 = 1.0
beta1 = 1.0

[noise]
model = "power-law"
exponent = 2.0
count = 8

[time]
tau = 0.01
steps = 20

[mc]
paths = 8
seed = 1

[output]
formats = ["csv", "json", "svg"]
"""


def _schema(name):
    return json.loads((CONTRACTS / name).read_text(encoding="utf-8"))


def _run(tmp_path, text, command, *extra):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(text, encoding="utf-8")
    out = tmp_path / "out"
    code = main([command, str(cfg), "--output-dir", str(out), "--threads", "1", *extra])
    return code, out


def test_check_writes_report(tmp_path, capsys):
    code, out = _run(tmp_path, SMALL, "check")
    assert code == 0
    report = StabilityReport.model_validate_json((out / "stability_report.json").read_text(encoding="utf-8"))
    assert report.n == 4 and report.verdicts.exact is True
    assert "kappa_tilde2" in capsys.readouterr().out


def test_missing_noise_is_config_error(tmp_path, capsys):
    text = SMALL.replace('[noise]\nmodel = "power-law"\nexponent = 2.0\ncount = 8\n', "")
    code, _ = _run(tmp_path, text, "check")
    assert code == 2
    assert "noise" in capsys.readouterr().err


def test_bad_override_is_config_error(tmp_path):
    code, _ = _run(tmp_path, SMALL, "check", "--set", "time.scheme=midpoint")
    assert code == 2


def test_simulate_single_noiseless_path(tmp_path):
    code, out = _run(tmp_path, SMALL, "simulate", "--set", "mc.paths=1", "--set", "system.beta1=0.0")
    assert code == 0
    rows = read_csv(out / "curve.csv")
    assert list(rows[0]) == CURVE_HEADER
    assert len(rows) == 21
    for row in rows:
        assert row["ci_low"] == row["mean_sq"] == row["ci_high"]
    manifest = RunManifest.model_validate_json((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest.command == "simulate"
    assert manifest.seed == 1
    assert manifest.resolved["beta1"] == 0.0
    assert manifest.cholesky_jitter == 0.0
    jsonschema.validate(json.loads((out / "manifest.json").read_text(encoding="utf-8")),
                        _schema("manifest.schema.json"))
    assert (out / "curve.svg").exists()


def test_simulate_is_repeatable(tmp_path):
    _, first = _run(tmp_path, SMALL, "simulate")
    a = (first / "curve.csv").read_text(encoding="utf-8")
    _, second = _run(tmp_path, SMALL, "simulate", "--threads", "1")
    assert (second / "curve.csv").read_text(encoding="utf-8") == a


def test_simulate_trajectory(tmp_path):
    code, out = _run(tmp_path, SMALL, "simulate", "--set", "output.trajectory=true",
                     "--set", "output.keep_states=true")
    assert code == 0
    rows = read_csv(out / "trajectory.csv")
    assert list(rows[0]) == ["t", "norm_sq", "u_1", "u_2", "u_3", "u_4"]


@pytest.mark.parametrize("what, count", [("tensor", 4), ("alpha", 2)])
def test_coeffs(tmp_path, what, count):
    code, out = _run(tmp_path, SMALL, "coeffs", "--what", what, "--set", "system.n=2", "--set", "system.m=2")
    assert code == 0
    assert len(read_csv(out / f"{what}.csv")) == count


def test_region_small_grid(tmp_path, capsys):
    text = SMALL + "\n[region]\nbeta1 = [0.0, 4.0]\nbeta0 = [-12.0, 4.0]\nbeta1_count = 3\nbeta0_count = 3\n"
    code, out = _run(tmp_path, text, "region")
    assert code == 0
    assert len(read_csv(out / "region.csv")) == 9
    summary = json.loads(capsys.readouterr().out)
    assert summary["cells"] == 9
    assert "<rect" in (out / "region.svg").read_text(encoding="utf-8")
    jsonschema.validate(json.loads((out / "region.json").read_text(encoding="utf-8")),
                        _schema("region.schema.json"))


def test_region_requires_section(tmp_path):
    code, _ = _run(tmp_path, SMALL, "region")
    assert code == 2


def test_converge_rejects_kernel_noise(tmp_path):
    text = SMALL.replace('model = "power-law"\nexponent = 2.0\ncount = 8', 'model = "fbm-field"\nhurst = 0.7')
    text += "\n[convergence]\nn_ref = 4\nm_ref = 4\nn_ladder = [2]\n"
    code, _ = _run(tmp_path, text, "converge")
    assert code == 1


def test_converge_small_study(tmp_path):
    text = SMALL + "\n[convergence]\nn_ref = 4\nm_ref = 4\nn_ladder = [2]\nm_ladder = [2]\npaths = 4\n"
    code, out = _run(tmp_path, text, "converge")
    assert code == 0
    rows = read_csv(out / "convergence.csv")
    assert [(r["ladder"], r["N"], r["M"]) for r in rows] == [("N", "2", "4"), ("M", "4", "2")]
    data = json.loads((out / "convergence_report.json").read_text(encoding="utf-8"))
    assert data["n_ref"] == 4 and data["paths"] == 4


def test_compare_variants(tmp_path):
    text = SMALL + (
        '\n[[compare.variants]]\nlabel = "implicit"\nscheme = "implicit"\n'
        '\n[[compare.variants]]\nlabel = "loud"\noverrides = { "system.beta1" = 3.0 }\n'
    )
    code, out = _run(tmp_path, text, "compare")
    assert code == 0
    rows = read_csv(out / "compare.csv")
    assert list(rows[0]) == ["t", "implicit", "loud"]
    assert rows[0]["implicit"] == rows[0]["loud"]
    manifest = RunManifest.model_validate_json((out / "manifest.json").read_text(encoding="utf-8"))
    assert [v.label for v in manifest.variants] == ["implicit", "loud"]


def test_compare_nu_ladder_rates_are_monotone(tmp_path, capsys):
    config = Path(__file__).resolve().parents[1] / "configs" / "nu_ladder.toml"
    code = main(["compare", str(config), "--output-dir", str(tmp_path / "out"), "--threads", "2",
                 "--set", "mc.paths=200", "--set", "time.horizon=0.5"])
    assert code == 0
    rates = json.loads(capsys.readouterr().out)["rates"]
    assert list(rates) == ["nu=0.5", "nu=1", "nu=2"]
    # diffusione più forte, decadimento più rapido
    assert rates["nu=0.5"] > rates["nu=1"] > rates["nu=2"]
    assert rates["nu=0.5"] < 0.0
