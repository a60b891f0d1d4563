import csv
import json
import math
import tracemalloc

import numpy as np
import pytest

from heatctl import cli

CONFIGS = {
    "cost": {"system": {"kind": "boundary", "L": math.pi, "N": 3}, "T": [0.5, 1.0]},
    "control": {"system": {"kind": "interior", "L": 1.0, "N": 5, "omega": [[0.2, 0.5]]}, "T": 0.3,
                "zeta0": "random", "samples": 11},
    "tensor-check": {"instances": 4, "N_range": [2, 8], "m_range": [1, 4]},
    "kernel": {"edges": [1.0, 1.0], "t": [0.05], "x": [[0.3, 0.4], [0.5, 0.5]], "y": [0.5, 0.5],
               "lower_check": True,
               "window": {"h": 0.05, "omega": [[0.7, 0.9], [0.1, 0.9]], "T1": 0.05, "T2": 0.2, "epsilon": 0.5}},
    "distance": {"scenario": {"kind": "strip", "L": 1.0, "h": 0.1, "truncation": 2, "omega": [0.2, 0.4]},
                 "points": [[0.5, 0.0], [0.8, 1.0]], "T": 0.2, "export_field": True},
    "gnc": {"mode": "evaluate", "scenario": {"kind": "strip", "L": 1.0, "h": 0.1, "truncation": [-1, 6],
                                             "omega": [0.2, 0.4]},
            "points": [[0.5, 1.0], [0.5, 3.0]], "Tbar": 0.5, "kappa": 1.5},
    "alpha-probe": {"L": 1.0, "T": [0.05]},
}


def run_cli(tmp_path, command, config, name="out", extra=()):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / name
    code = cli.main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("command", sorted(CONFIGS))
def test_rerun_byte_identical(tmp_path, command):
    c1, o1 = run_cli(tmp_path, command, CONFIGS[command], "a")
    c2, o2 = run_cli(tmp_path, command, CONFIGS[command], "b")
    assert c1 == c2 == 0
    names = sorted(p.name for p in o1.iterdir())
    assert names == sorted(p.name for p in o2.iterdir())
    for n in names:
        assert (o1 / n).read_bytes() == (o2 / n).read_bytes()
    summary = json.loads((o1 / "summary.json").read_text())
    assert summary["config"] == CONFIGS[command]
    assert summary["tool"]["name"] == "heatctl" and summary["provenance"]


def test_cost_closed_form_first_prefix(tmp_path):
    code, out = run_cli(tmp_path, "cost", {"system": {"kind": "boundary", "L": math.pi, "N": 3}, "T": 1.0})
    assert code == 0
    rows = read_rows(out / "report.csv")
    assert [int(r["N[modes]"]) for r in rows] == [1, 2, 3]
    # one mode: lambda = 1, |C e_1|^2 = 2 / pi
    ref = math.exp(-2) * math.pi / (1 - math.exp(-2))
    assert float(rows[0]["kappa_sq[1]"]) == pytest.approx(ref, rel=1e-12)
    kappas = [float(r["kappa[1]"]) for r in rows]
    assert kappas == sorted(kappas)
    assert all("e" in r["kappa[1]"] and len(r["kappa[1]"].split("e")[0].replace(".", "").lstrip("-")) == 17
               for r in rows)


def test_single_row_two_lines(tmp_path):
    code, out = run_cli(tmp_path, "alpha-probe", {"L": 1.0, "T": 0.05})
    assert code == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("T[time],N[modes]")
    assert float(lines[1].split(",")[3]) == pytest.approx(0.267551, abs=5e-7)


def test_tensor_check_summary(tmp_path):
    code, out = run_cli(tmp_path, "tensor-check", CONFIGS["tensor-check"])
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["results"]["summary"] == "4/4 pass"
    assert s["seed"] == 42


def test_seed_changes_random_datum(tmp_path):
    _, a = run_cli(tmp_path, "control", CONFIGS["control"], "a", ["--seed", "1"])
    _, b = run_cli(tmp_path, "control", CONFIGS["control"], "b", ["--seed", "2"])
    za = json.loads((a / "summary.json").read_text())["results"]["zeta0"]
    zb = json.loads((b / "summary.json").read_text())["results"]["zeta0"]
    assert za != zb
    np.testing.assert_array_equal(za, np.random.default_rng(1).standard_normal(5))


def test_control_certificates(tmp_path):
    cfg = dict(CONFIGS["control"], zeta0="worst")
    code, out = run_cli(tmp_path, "control", cfg)
    r = json.loads((out / "summary.json").read_text())["results"]
    assert code == 0 and r["residual_ok"] and r["energy_within_bound"]
    assert r["energy"] == pytest.approx(r["energy_bound"], rel=1e-6)


def test_gnc_kappa_hypothesis_exit_2(tmp_path, capsys):
    cfg = dict(CONFIGS["gnc"], kappa=0.5)
    code, out = run_cli(tmp_path, "gnc", cfg)
    assert code == 2
    err = capsys.readouterr().err
    assert "kappa" in err and "kappa > 1" in err
    assert not out.exists()


def test_schema_error_names_field_path(tmp_path, capsys):
    cfg = {"system": {"kind": "boundary", "L": 1.0, "N": 0}, "T": 1.0}
    assert run_cli(tmp_path, "cost", cfg)[0] == 2
    assert "system/N" in capsys.readouterr().err
    assert run_cli(tmp_path, "cost", {"system": {"kind": "interior", "L": 1.0, "N": 3}, "T": 1.0})[0] == 2
    assert run_cli(tmp_path, "kernel", dict(CONFIGS["kernel"], extra=1))[0] == 2


def test_unreadable_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["cost", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["cost", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


def test_computation_error_exit_1_verbatim(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "alpha-probe", {"L": 1.0, "T": [20.0]})
    assert code == 1
    assert "exceeds the probe range" in capsys.readouterr().err


def test_unwritable_output_exit_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(CONFIGS["alpha-probe"]))
    assert cli.main(["alpha-probe", "--config", str(cfg), "--out", str(blocker / "sub")]) == 1


def test_bad_seed_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(CONFIGS["alpha-probe"]))
    with pytest.raises(SystemExit) as exc:
        cli.main(["alpha-probe", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "-3"])
    assert exc.value.code == 2


def test_streaming_many_rows(tmp_path):
    xs = [[float(x)] for x in np.linspace(0.0001, 0.9999, 10_000)]
    cfg = {"edges": [1.0], "t": 0.1, "x": xs, "y": [0.5]}
    tracemalloc.start()
    code, out = run_cli(tmp_path, "kernel", cfg)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert code == 0
    with open(out / "report.csv") as fh:
        assert sum(1 for _ in fh) == 10_001
    assert peak < 50e6


def test_distance_field_export(tmp_path):
    code, out = run_cli(tmp_path, "distance", CONFIGS["distance"])
    rows = read_rows(out / "field.csv")
    s = json.loads((out / "summary.json").read_text())
    assert code == 0 and len(rows) == s["results"]["nodes"]
    assert min(float(r["distance[length]"]) for r in rows) == 0.0
    report = read_rows(out / "report.csv")
    assert all(r["inequality_ok[flag]"] == "1" for r in report)


def test_gnc_modes(tmp_path):
    prof = {"kind": "capped_inverse", "cap": 0.5, "scale": 2.0}
    code, out = run_cli(tmp_path, "gnc", {"mode": "rod-iii", "profile": prof, "T": 1.0, "z": [8, 16, 32]}, "r")
    vals = [float(r["upper[length^2]"]) for r in read_rows(out / "report.csv")]
    assert code == 0 and vals[0] > vals[1] > vals[2]
    code, out = run_cli(tmp_path, "gnc", {"mode": "shrinkrod", "profile": {"kind": "constant", "r0": 0.5},
                                          "T": 0.1, "z": [10, 20, 30], "d": [1, 2, 3], "kappa_prime": 2.0}, "s")
    assert code == 0 and json.loads((out / "summary.json").read_text())["results"]["divergent"]
    assert run_cli(tmp_path, "gnc", {"mode": "shrinkrod", "profile": prof, "T": 0.1, "z": [1, 2],
                                     "d": [1.0], "kappa_prime": 2.0}, "t")[0] == 2
