import json

import pytest

from coldchain.cli import main
from coldchain.mps import read_mps


@pytest.fixture(scope="module")
def instance_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "inst.json"
    code = main(["gen", "--out", str(path), "--seed", "1", "--regions", "1", "--districts", "1",
                 "--clinics", "2", "--periods", "4", "--capacity-scale", "1.25"])
    assert code == 0
    return path


def test_gen_writes_instance(instance_file):
    doc = json.loads(instance_file.read_text())
    assert len(doc["nodes"]) == 1 + 1 + 1 + 2


def test_solve(instance_file, tmp_path, capsys):
    assert main(["solve", str(instance_file), "--sample-size", "4", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "Optimal"
    assert (tmp_path / "solution.txt").exists()
    assert (tmp_path / "sr_by_vaccine.csv").read_text().startswith("group,scenario,value")
    assert "Optimal" in capsys.readouterr().out


def test_bssaa_prints_confidence(instance_file, tmp_path, capsys):
    code = main(["bssaa", str(instance_file), "--sample-size", "5", "--posterior-size", "10",
                 "--replications", "10", "--upper-bound", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "confidence 0.999" in out
    assert "min" in out and "max" in out and "avg" in out
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["upper_bound"]["ordering_holds"]


def test_export_lp(instance_file, tmp_path):
    out = tmp_path / "p.mps"
    assert main(["export-lp", str(instance_file), "--sample-size", "3", "--out", str(out)]) == 0
    assert read_mps(out).maximize


def test_experiment_from_spec_file(instance_file, tmp_path):
    spec = {
        "name": "mini",
        "instance": str(instance_file),
        "saa": {"sample_size": 4, "posterior_size": 8, "replications": 2},
        "arms": [{"name": "base"}, {"name": "thermo", "transforms": [{"type": "Thermostable", "vaccine": "PENTA"}]}],
    }
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    assert main(["experiment", str(path), "--out", str(tmp_path / "bundle")]) == 0
    assert (tmp_path / "bundle" / "comparisons.csv").exists()


def test_partial_experiment_exit_code(instance_file, tmp_path):
    spec = {
        "name": "half",
        "instance": str(instance_file),
        "saa": {"sample_size": 4, "posterior_size": 8, "replications": 1},
        "arms": [{"name": "base"}, {"name": "bad", "transforms": [{"type": "Thermostable", "vaccine": "XX"}]}],
    }
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    assert main(["experiment", str(path), "--out", str(tmp_path / "b")]) == 2


def test_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "missing.json"
    assert main(["solve", str(bad), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_invalid_instance_exit_code(instance_file, tmp_path, capsys):
    doc = json.loads(instance_file.read_text())
    doc["arcs"].append({"from": doc["nodes"][-1]["id"], "to": doc["nodes"][0]["id"]})
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["solve", str(path), "--out", str(tmp_path)]) == 1
    assert "upstream arc" in capsys.readouterr().err
