import json

import pytest

from h12perim import cli
from h12perim.experiments import EXPERIMENTS, ConfigError, ExperimentConfig


def _run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_help_lists_every_experiment(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for name, (_, anchor) in EXPERIMENTS.items():
        assert name in out
    assert set(EXPERIMENTS) == {"energy", "decompose", "scan", "jump1d", "fnu", "boundary", "product-check",
                                "counterexample", "diagnose", "kernel-audit"}


def test_energy_square(tmp_path):
    shape = tmp_path / "square.json"
    shape.write_text(json.dumps({"variant": "Box", "corner": [0.25, 0.25], "widths": [0.5, 0.5]}))
    assert _run(tmp_path / "out", "energy", "--shape", str(shape), "--eps-scan", "5:8") == 0
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    h = files[0].split("_")[-1].split(".")[0]
    assert all(h in f for f in files)
    trace = next((tmp_path / "out").glob("trace_*.csv")).read_bytes()
    assert trace.startswith(b"r,value\n") and b"\r" not in trace


def test_csv_bit_identical(tmp_path):
    args = ["jump1d", "--resolution", "65536", "--breakpoints", "0.5", "--values", "0,1"]
    assert _run(tmp_path / "a", *args) == 0
    assert _run(tmp_path / "b", *args) == 0
    for pa in (tmp_path / "a").glob("*.csv"):
        assert pa.read_bytes() == (tmp_path / "b" / pa.name).read_bytes()


def test_fnu_table_and_audit(tmp_path):
    assert _run(tmp_path, "fnu", "--kernel", "phi", "--normals", "16", "--dimension", "2") == 0
    table = next(tmp_path.glob("density_*.csv")).read_text().splitlines()
    assert table[0] == "nu_x,nu_y,F_marginal,F_halfspace" and len(table) == 17
    assert next(tmp_path.glob("lipschitz_*.csv")).read_text().count("\n") == 33


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["energy", "--eps-scan", "x:y"])
    assert exc.value.code == 2
    shape = tmp_path / "iv.json"
    shape.write_text(json.dumps({"variant": "Intervals", "intervals": [[0.1, 0.6]]}))
    # scales below 4h on a 64-sample grid
    assert _run(tmp_path, "scan", "--shape", str(shape), "--resolution", "64") == 2
    assert _run(tmp_path, "energy") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(tmp_path, "energy", "--config", str(bad)) == 2


def test_failed_assertion_writes_record(tmp_path):
    code = _run(tmp_path, "diagnose", "--fixture", "checkerboard", "--expect", "finite-perimeter-consistent")
    assert code == 1
    rec = json.loads(next(tmp_path.glob("failure_*.json")).read_text())
    assert rec["failed"][0]["name"] == "verdict"
    assert rec["failed"][0]["verdict"] == "infinite-perimeter-consistent"


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "jump1d", "resolution": 2**14, "params": {"rel_tol": 0.05}}))
    assert _run(tmp_path / "o", "jump1d", "--config", str(cfg), "--resolution", "65536") == 0
    used = json.loads(next((tmp_path / "o").glob("config_*.json")).read_text())
    assert used["resolution"] == 65536 and used["params"]["rel_tol"] == 0.05


def test_product_check_and_kernel_audit(tmp_path):
    assert _run(tmp_path / "p", "product-check") == 0
    assert _run(tmp_path / "k", "kernel-audit") == 0
    audit = json.loads(next((tmp_path / "k").glob("kernel_audit_*.json")).read_text())
    assert list(audit) == sorted(audit)
    assert audit["phi_at_1"] == pytest.approx(0.591239209020096, rel=1e-12)


def test_boundary_and_decompose(tmp_path):
    shape = tmp_path / "ball.json"
    shape.write_text(json.dumps({"variant": "Ball", "center": [0.5, 0.5], "radius": 0.25}))
    assert _run(tmp_path / "b", "boundary", "--shape", str(shape)) == 0
    assert _run(tmp_path / "d", "decompose", "--shape", str(shape), "--eps", "0.02") == 0


def test_config_round_trip():
    cfg = ExperimentConfig("scan", dimension=2, resolution=512, schedule=[0.1, 0.05], params={"rel_tol": 0.1})
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.hash == cfg.hash
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "scan", "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig("scan", resolution=64, schedule=[0.01]).check_schedule()
