import csv
import json
import re

import pytest

from chaoslab.cli import run
from chaoslab.errors import MissingReport
from chaoslab.plots import emit_plots

TOY = {"model": {"kind": "gaussian-field"}, "domain": {"d": 1}, "gamma": 0.2, "lambda_hat": 0.5,
       "deltas": [0.25, 0.125, 0.0625], "seed": 3, "replicas": 20, "truncation_order": 2,
       "options": {"quadrature_nodes": 2000, "pair_samples": 2000, "max_k": 4, "a3_tuples": 200}}


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_coeffs_gaussian(tmp_path):
    assert run(["coeffs", "--disorder", "gaussian", "--mmax", "12", "--out", str(tmp_path)]) == 0
    rows = {(int(r["m"]), int(r["l"])): r for r in csv.DictReader(open(tmp_path / "coeffs.csv"))}
    assert float(rows[4, 2]["value"]) == 0.5
    assert abs(float(rows[6, 3]["value"]) - 0.1666667) < 1e-7
    assert rows[6, 3]["exact"] == "1/6"
    assert (tmp_path / "coeffs_plot.gp").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert "coeffs.csv" in manifest["runs"]["coeffs"]["artifacts"]


def test_relevance_gate_exit_codes(tmp_path, capsys):
    bad = write_cfg(tmp_path, {**TOY, "gamma": 0.3})
    assert run(["partition", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    assert "relevance gate" in capsys.readouterr().err
    assert run(["partition", "--config", bad, "--allow-irrelevant", "--out", str(tmp_path / "o")]) == 0
    ising = write_cfg(tmp_path, {**TOY, "domain": {"d": 2}, "gamma": 0.125, "deltas": [0.25]}, "i.json")
    assert run(["partition", "--config", ising, "--out", str(tmp_path / "i")]) == 0


def test_config_errors(tmp_path):
    unknown = write_cfg(tmp_path, {**TOY, "extra": 1})
    assert run(["expand", "--config", unknown]) == 2
    assert run(["expand", "--config", str(tmp_path / "missing.json")]) == 2
    assert run(["nonsense"]) == 2


def test_runtime_error_exit_code(tmp_path):
    big = write_cfg(tmp_path, {**TOY, "options": {**TOY["options"], "subset_budget": 5}})
    assert run(["chaos", "--config", big, "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("command", ["partition", "expand", "chaos", "verify-a1", "verify-a2", "verify-a3",
                                     "remainder", "converge"])
def test_commands_are_deterministic(tmp_path, command):
    cfg = write_cfg(tmp_path, TOY)
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert run([command, "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
        outs.append(out)
    for f in outs[0].glob("*.csv"):
        assert f.read_bytes() == (outs[1] / f.name).read_bytes()
    rep = json.loads((outs[0] / f"{command}.json").read_text())
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    entry = manifest["runs"][command]
    assert entry["config_hash"] == rep["config_hash"] and entry["seed"] == 3
    assert all((outs[0] / a).exists() for a in entry["artifacts"])
    assert (outs[0] / f"{command}.json").read_bytes() == (outs[1] / f"{command}.json").read_bytes()


def test_seed_override_changes_outputs(tmp_path):
    cfg = write_cfg(tmp_path, TOY)
    run(["partition", "--config", cfg, "--out", str(tmp_path / "a")])
    run(["partition", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "9"])
    assert (tmp_path / "a/partition.csv").read_bytes() != (tmp_path / "b/partition.csv").read_bytes()


def test_plots(tmp_path):
    assert run(["plots", "--out", str(tmp_path)]) == 0
    assert list(tmp_path.iterdir()) == []
    assert emit_plots([], tmp_path) == []
    with pytest.raises(MissingReport):
        emit_plots([tmp_path / "nope.json"], tmp_path)
    assert run(["plots", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1
    cfg = write_cfg(tmp_path, TOY)
    out = tmp_path / "o"
    assert run(["converge", "--config", cfg, "--out", str(out)]) == 0
    script = (out / "converge_plot.gp").read_text()
    block = re.search(r"\$dist << EOD\n(.*?)\nEOD", script, re.S).group(1).splitlines()
    assert len(block) == 3 and "set logscale xy" in script
    assert run(["verify-a2", "--config", cfg, "--out", str(out)]) == 0
    first = (out / "verify-a2_plot.gp").read_bytes()
    scripts = emit_plots([out / "verify-a2.json"], out)
    assert scripts[0].read_bytes() == first
    tails = [float(l.split()[1]) for l in re.search(r"\$d0 << EOD\n(.*?)\nEOD", first.decode(), re.S)
             .group(1).splitlines()]
    assert all(b <= a for a, b in zip(tails, tails[1:]))
    assert run(["remainder", "--config", cfg, "--out", str(out)]) == 0
    assert "fit f(x)" in (out / "remainder_plot.gp").read_text()
