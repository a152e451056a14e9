import json

import pytest

from forage.cli import main, read_config


def test_demo_and_replay(tmp_path, capsys):
    assert main(["demo", "--out", str(tmp_path)]) == 0
    assert "answer: (C)" in capsys.readouterr().out
    assert main(["replay", "--trajectory", str(tmp_path / "trajectory.jsonl")]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True


def test_needles_run_score(tmp_path, capsys):
    main(["needles", "--out", str(tmp_path), "--count", "3", "--n-tokens", "500"])
    capsys.readouterr()
    cfg = tmp_path / "cfg.ini"
    cfg.write_text("[episode]\nt_max = 8\nobservation_budget = 2000\n")
    rc = main(["run", "--instances", str(tmp_path / "instances.jsonl"), "--doc-root", str(tmp_path),
               "--heuristic", "--runs", "2", "--parallel", "2", "--out", str(tmp_path / "out"), "--config", str(cfg)])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["accuracy"] == 100.0 and report["runs"] == 2
    assert main(["score", "--results", str(tmp_path / "out" / "results.jsonl")]) == 0
    assert json.loads(capsys.readouterr().out)["accuracy"] == 100.0


def test_backend_flags_required(tmp_path):
    p = tmp_path / "i.jsonl"
    p.write_text("")
    with pytest.raises(SystemExit):
        main(["run", "--instances", str(p)])


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[episode]\nbogus = 1\n")
    p = tmp_path / "i.jsonl"
    p.write_text("")
    with pytest.raises(SystemExit):
        main(["run", "--instances", str(p), "--heuristic", "--config", str(cfg)])
    assert read_config(cfg) == {"episode": {"bogus": "1"}}


def test_baseline_cli_against_fault_double(tmp_path, capsys, monkeypatch):
    import httpx
    from faults import FaultServer, ok_body
    doc = tmp_path / "d.txt"
    doc.write_text("the answer is yes\n")
    inst = tmp_path / "i.jsonl"
    inst.write_text(json.dumps({"id": "a", "query": "Is it?", "doc_path": str(doc), "gold": "yes"}) + "\n")
    server = FaultServer([ok_body("yes")])
    real = httpx.Client
    monkeypatch.setattr(httpx, "Client", lambda *a, **k: real(transport=httpx.MockTransport(server)))
    rc = main(["baseline", "--instances", str(inst), "--max-context", "500",
               "--backend-endpoint", "http://x/v1", "--model", "m"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["accuracy"] == 100.0
