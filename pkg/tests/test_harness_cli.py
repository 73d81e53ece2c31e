import json

import pytest

from symbiotic_ran.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from symbiotic_ran.harness import apply_backend_override, run
from symbiotic_ran.scenario import PRESETS, ScenarioError, load_scenario, preset, save_scenario, scenario_from_dict


def test_all_presets_validate():
    for name in PRESETS:
        assert preset(name).name


def test_unknown_preset():
    with pytest.raises(ScenarioError):
        preset("nope")


def test_scenario_file_round_trip(tmp_path):
    sc = preset("route-tuned")
    p = tmp_path / "s.json"
    save_scenario(sc, p)
    back = load_scenario(p)
    assert back.to_dict() == sc.to_dict()


@pytest.mark.parametrize("patch,msg", [
    ({"kind": "dance"}, "kind"),
    ({"controller": {"design": "pid"}}, "design"),
    ({"duration_ms": 0}, "duration"),
    ({"extra": 1}, "unknown"),
    ({"intents": {"random": {"low": 1, "high": 2, "hold_ms": 10}}, "seed": None}, "seed"),
    ({"trace": {"file": "missing.csv"}}, "trace file"),
])
def test_invalid_scenarios(patch, msg):
    doc = {**preset("route-tuned").to_dict(), **patch}
    with pytest.raises(ScenarioError, match=msg):
        scenario_from_dict(doc)


def test_ci_mode_refuses_http():
    sc = apply_backend_override(preset("gain-step"),
                                {"kind": "http", "endpoint": "http://localhost:1/v1", "model": "m"})
    with pytest.raises(ScenarioError, match="CI"):
        run(sc, ci=True)


def test_backend_override_reaches_every_agent():
    sc = apply_backend_override(preset("demo"), "cooperative")
    assert sc.type1["backend"] == "cooperative"
    for ph in sc.phases:
        for a in ph.get("negotiation", {}).get("agents", []):
            assert a["backend"] == "cooperative"


def test_file_trace_scenario(tmp_path):
    (tmp_path / "t.csv").write_text("time_ms,mcs\n0,28\n500,10\n")
    doc = {**preset("route-tuned").to_dict(), "trace": {"file": "t.csv"}, "duration_ms": 1000}
    (tmp_path / "s.json").write_text(json.dumps(doc))
    art = run(load_scenario(tmp_path / "s.json"))
    assert art.report.enforcements >= 2


def test_demo_phases():
    art = run(preset("demo"))
    rows = {r["phase"]: r for r in art.phases}
    assert rows["I"]["trigger"] == "time" and rows["I"]["t_ms"] == 0
    assert rows["II"]["trigger"] == "sla_violation" and 200_000 < rows["II"]["t_ms"] < 300_000
    assert rows["III"]["action"] == "off" and rows["III"]["t_ms"] == 300_000
    assert rows["IV"]["t_ms"] == 400_000
    assert all(r.get("consensus") is not None for r in art.phases if r["action"] == "negotiate")


def test_cli_oracle(capsys):
    assert main(["oracle", "55", "55", "55", "--target", "55"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "55"
    assert main(["oracle", "10", "90", "--target", "54"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "none"
    assert main(["oracle", "--target", "54"]) == EXIT_INVALID
    assert main(["oracle", "140", "--target", "54"]) == EXIT_INVALID


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["simulate"]) == EXIT_INVALID
    assert main(["simulate", "--preset", "demo"]) == EXIT_INVALID
    assert main(["simulate", str(tmp_path / "missing.json")]) == EXIT_INVALID
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["simulate", str(tmp_path / "bad.json")]) == EXIT_INVALID
    assert main(["bogus-verb"]) == EXIT_INVALID
    http = json.dumps({"kind": "http", "endpoint": "http://127.0.0.1:9/v1", "model": "m",
                       "max_retries": 0, "timeout_ms": 200})
    assert main(["simulate", "--preset", "gain-step", "--ci", "--backend-override", http]) == EXIT_INVALID
    assert main(["simulate", "--preset", "gain-step", "--backend-override", http]) == EXIT_OK
    assert main(["negotiate", "--preset", "negotiate-guardrail", "--backend-override", http]) == EXIT_RUNTIME


def test_cli_ci_env(monkeypatch):
    monkeypatch.setenv("SYMBIOTIC_RAN_CI", "1")
    http = json.dumps({"kind": "http", "endpoint": "http://127.0.0.1:9/v1", "model": "m"})
    assert main(["simulate", "--preset", "gain-step", "--backend-override", http]) == EXIT_INVALID


def test_cli_run_writes_artifacts_and_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["negotiate", "--preset", "negotiate-guardrail", "--out", str(out), "--format", "json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["consensus"] == [53]
    audit = out / "negotiate-guardrail-seed0.audit.jsonl"
    assert audit.exists() and (out / "negotiate-guardrail-seed0.transcript.jsonl").exists()
    assert main(["report", str(audit), "--format", "json"]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["mae"] == pytest.approx(summary["report"]["mae"])
    # a second run into the same directory must not clobber the audit
    assert main(["negotiate", "--preset", "negotiate-guardrail", "--out", str(out)]) == EXIT_INVALID


def test_cli_seed_changes_run_id(tmp_path, capsys):
    assert main(["simulate", "--preset", "route-tuned", "--seed", "3", "--out", str(tmp_path),
                 "--format", "csv"]) == EXIT_OK
    assert (tmp_path / "route-tuned-seed3.audit.jsonl").exists()
    assert capsys.readouterr().out.startswith("rmse,")


def test_report_on_corrupt_file(tmp_path):
    p = tmp_path / "x.audit.jsonl"
    p.write_text("garbage\n")
    assert main(["report", str(p)]) == EXIT_INVALID


def test_scripted_runs_are_deterministic(tmp_path):
    a = run(preset("demo"), tmp_path / "a")
    b = run(preset("demo"), tmp_path / "b")
    assert a.audit_path.read_bytes() == b.audit_path.read_bytes()
