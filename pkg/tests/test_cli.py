import json
from pathlib import Path

import pytest

from blowup_lab import cli
from blowup_lab.errors import ManifestError

MANIFESTS = Path(__file__).resolve().parents[1] / "scripts" / "manifests"


def write(tmp_path, doc, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(p)


def csv_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).glob("*.csv"))}


@pytest.mark.parametrize("path", sorted(MANIFESTS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_manifests_validate(path, capsys):
    doc = json.loads(path.read_text())
    assert cli.main([doc["command"], "--manifest", str(path), "--validate"]) == 0
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["command"] == doc["command"]
    assert set(resolved["parameters"]) == set(cli.DEFAULTS[doc["command"]])


@pytest.mark.parametrize("doc", [
    [1, 2],
    {"command": "bogus"},
    {"command": "criteria", "extra": 1},
    {"command": "criteria", "parameters": {"not_a_parameter": 1}},
    {"command": "criteria", "parameters": []},
    {"command": "criteria", "seed": 1.5},
    {"command": "criteria", "seed": True},
])
def test_bad_manifests_rejected(doc, tmp_path):
    with pytest.raises(ManifestError):
        cli.ExperimentManifest.from_dict(doc)
    assert cli.main(["criteria", "--manifest", write(tmp_path, doc), "--validate"]) == 2


def test_invalid_json_and_missing_file(tmp_path):
    assert cli.main(["criteria", "--manifest", write(tmp_path, "{not json")]) == 2
    assert cli.main(["criteria", "--manifest", str(tmp_path / "absent.json")]) == 2


def test_command_mismatch(tmp_path):
    assert cli.main(["ode", "--manifest", write(tmp_path, {"command": "criteria"}), "--validate"]) == 2


def test_defaults_merge_nested():
    m = cli.ExperimentManifest.from_dict({"command": "pde", "parameters": {"budget": {"t_max": 5.0}}}).resolved()
    assert m.parameters["budget"]["t_max"] == 5.0
    assert m.parameters["budget"]["rtol"] == cli.DEFAULTS["pde"]["budget"]["rtol"]
    assert cli.DEFAULTS["pde"]["budget"]["t_max"] != 5.0


def test_expand_family():
    fs = cli.expand_family({"kind": "power", "p_offsets": [-0.25, 0.25]}, 2.0, 1)
    assert [f.p for _, _, f, _ in fs] == [2.75, 3.25]
    fs = cli.expand_family({"kind": "logcorrected", "beta": [0.5, 1.5]}, 1.0, 1)
    assert [f.beta for _, _, f, _ in fs] == [0.5, 1.5]
    with pytest.raises(ManifestError):
        cli.expand_family({"kind": "quadratic"}, 2.0, 1)


def test_example4_report_and_roundtrip(tmp_path, capsys):
    out1 = tmp_path / "a"
    code = cli.main(["example4", "--manifest", str(MANIFESTS / "example4_default.json"), "--out", str(out1)])
    assert code == 0
    assert "FAIL" not in capsys.readouterr().out
    report = json.loads((out1 / "report.json").read_text())
    assert report["all_passed"]
    embedded = write(tmp_path, report["manifest"], "embedded.json")
    out2 = tmp_path / "b"
    assert cli.main(["example4", "--manifest", embedded, "--out", str(out2)]) == 0
    assert csv_bytes(out1) and csv_bytes(out1) == csv_bytes(out2)


def test_bad_theta_surfaces_window_violation(tmp_path, capsys):
    code = cli.main(["example4", "--manifest", str(MANIFESTS / "example4_bad_theta.json"),
                     "--out", str(tmp_path)])
    assert code == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "WindowViolation" in out


def test_seeded_ode_run_reproduces(tmp_path):
    doc = {"command": "ode", "seed": 7, "parameters": {
        "families": [{"kind": "power", "p_offsets": [-0.25, 0.25]}], "cells": [[2.0, 1]],
        "sample": {"x0": [0.1, 1.0, 10.0, 100.0, 1000.0], "t0": [1.0, 100.0]}, "random_cells": 2}}
    m = write(tmp_path, doc)
    assert cli.main(["ode", "--manifest", m, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["ode", "--manifest", m, "--out", str(tmp_path / "b")]) == 0
    a, b = csv_bytes(tmp_path / "a"), csv_bytes(tmp_path / "b")
    assert a and a == b


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    doc = {"command": "criteria", "parameters": {"families": [{"kind": "power", "p_offsets": [-0.25, 0.25]}],
                                                 "cells": [[2.0, 1]]}}
    assert cli.main(["criteria", "--manifest", write(tmp_path, doc)]) == 0
    assert (tmp_path / "env" / "report.json").exists()
