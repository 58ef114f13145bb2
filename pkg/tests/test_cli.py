"""Scenario runner: parsing, determinism, exit codes, report schema."""

import json

import pytest
import yaml

from qklab.cli import (
    ScenarioError,
    Scenario,
    list_scenarios,
    load_scenario,
    main,
    parse_expression,
    run,
)
from qklab.jets import ChartPoint
import numpy as np


def test_bundled_catalogue_names():
    names = list_scenarios()
    assert "n8_flat_qk" in names
    assert "g2_as_ricci_flat" in names
    assert "hkqk_roundtrip_example1" in names


def test_parse_expression_grammar():
    f = parse_expression("2*exp(2*t) + t**2 - 1/(1+t)", ("t",))
    j = f(ChartPoint(np.array([0.5])))
    expect = 2 * np.exp(1.0) + 0.25 - 1 / 1.5
    assert j.value == pytest.approx(expect, rel=1e-14)


def test_parse_expression_rejects_junk():
    with pytest.raises(ScenarioError):
        parse_expression("__import__('os')", ("t",))
    with pytest.raises(ScenarioError):
        parse_expression("unknown_fn(t)", ("t",))
    with pytest.raises(ScenarioError):
        parse_expression("t + zz", ("t",))


def test_run_small_scenario_passes():
    scenario = load_scenario("q5_flat_einstein")
    report = run(scenario, samples=10)
    assert report.all_passed
    names = [row.name for row in report.checks]
    assert any(name.startswith("einstein") for name in names)


def test_determinism_byte_identical_body():
    a = run(load_scenario("q5_flat_einstein"), samples=10)
    b = run(load_scenario("q5_flat_einstein"), samples=10)
    assert json.dumps(a.body_dict(), sort_keys=True) == json.dumps(b.body_dict(), sort_keys=True)


def test_wrong_constant_fails(tmp_path):
    doc = {
        "name": "wrong_lambda",
        "base": {"kind": "flat", "n": 1},
        "model": {"kind": "N", "profiles": "exponential"},
        "sampling": {"count": 5, "seed": 3},
        "checks": [{"kind": "einstein", "lam": -15.0, "tolerance": 1e-7}],
    }
    path = tmp_path / "wrong.yaml"
    path.write_text(yaml.safe_dump(doc))
    assert main(["run", str(path)]) == 1


def test_malformed_scenario_exit_2(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("name: broken\nchecks: [\n")
    assert main(["run", str(path)]) == 2
    path2 = tmp_path / "missing.yaml"
    path2.write_text("name: incomplete\n")
    assert main(["run", str(path2)]) == 2


def test_cli_run_with_report(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["run", "q5_flat_einstein", "--samples", "8", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "ALL PASSED" in printed
    data = json.loads(out.read_text())
    assert data["scenario"] == "q5_flat_einstein"
    assert data["all_passed"] is True
    assert {"name", "status", "max_residual", "tolerance"} <= set(data["checks"][0])


def test_tolerance_override_can_fail():
    scenario = load_scenario("q5_flat_einstein")
    report = run(scenario, samples=5, tolerance_overrides={"einstein": 1e-20})
    assert not report.all_passed


def test_seed_changes_samples_but_still_passes():
    scenario = load_scenario("q5_flat_einstein")
    report = run(scenario, seed=12345, samples=10)
    assert report.all_passed
    assert report.seed == 12345


def test_checks_continue_after_failure(tmp_path):
    doc = {
        "name": "fail_then_pass",
        "base": {"kind": "flat", "n": 1},
        "model": {"kind": "N", "profiles": "exponential"},
        "sampling": {"count": 5, "seed": 3},
        "checks": [
            {"kind": "einstein", "lam": -15.0, "tolerance": 1e-7},
            {"kind": "structure_equations", "tolerance": 1e-10},
        ],
    }
    path = tmp_path / "seq.yaml"
    path.write_text(yaml.safe_dump(doc))
    report = run(load_scenario(str(path)))
    assert [r.status for r in report.checks] == ["fail", "pass"]


def test_unknown_check_rejected(tmp_path):
    doc = {
        "name": "unknown",
        "base": {"kind": "flat", "n": 1},
        "model": {"kind": "N"},
        "checks": [{"kind": "nonsense"}],
    }
    path = tmp_path / "unknown.yaml"
    path.write_text(yaml.safe_dump(doc))
    with pytest.raises(ScenarioError):
        run(load_scenario(str(path)))
