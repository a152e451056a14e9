"""Deterministic replay of a trajectory log through the real loop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .controller import Backends, EpisodeConfig, EpisodeResult, Instance, run_episode
from .env import DocumentEnv
from .gateway import MockBackend, ToolCall
from .policy import Script
from .trajectory import Trajectory, read_trajectory


@dataclass
class ReplayReport:
    result: EpisodeResult
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def config_from_header(header: dict) -> EpisodeConfig:
    known = {f.name for f in fields(EpisodeConfig)}
    raw = header.get("config") or {}
    return EpisodeConfig(**{k: v for k, v in raw.items() if k in known})


def backends_from_trajectory(traj: Trajectory) -> Backends:
    """Mocks that reproduce the logged policy actions, diagnoses and answer."""
    script = Script.from_records(traj.steps)
    policy = MockBackend([ToolCall(a.kind, a.args) for a in script.actions])
    diagnoses = [rec["observation"] for rec in traj.steps if rec["action"]["name"] == "Evaluate"]
    answer = MockBackend([traj.footer.get("answer") or "unknown"])
    return Backends(policy, MockBackend(diagnoses), answer)


def replay(path, doc_root=None, env: DocumentEnv | None = None, log_path=None) -> ReplayReport:
    """Re-run a logged episode and compare each step with the log.

    The document is located through the header's instance record, relative
    to ``doc_root`` when the stored path is not absolute or has moved.
    """
    traj = read_trajectory(path)
    if not traj.header:
        raise ValueError(f"{path} has no header record")
    record = dict(traj.header["instance"])
    doc = Path(record["doc_path"])
    if doc_root is not None and not doc.is_file():
        record["doc_path"] = str(Path(doc_root) / doc.name)
    instance = Instance.from_dict(record)
    result = run_episode(instance, config_from_header(traj.header), backends_from_trajectory(traj),
                         env or DocumentEnv(), log_path=log_path)

    problems = []
    if len(result.trace) != len(traj.steps):
        problems.append(f"step count {len(result.trace)} != logged {len(traj.steps)}")
    for step, rec in zip(result.trace, traj.steps):
        if step.action.to_dict() != rec["action"]:
            problems.append(f"step {step.index}: action differs")
        if step.observation != rec["observation"]:
            problems.append(f"step {step.index}: observation differs")
        if step.state_digest != rec["state"]["digest"]:
            problems.append(f"step {step.index}: state digest differs")
    footer = traj.footer
    if "terminated" in footer and footer["terminated"] != result.terminated:
        problems.append(f"terminated {result.terminated} != logged {footer['terminated']}")
    if "final_state" in footer and footer["final_state"] != result.final_state.to_json():
        problems.append("final state differs")
    return ReplayReport(result, problems)


def dumps_summary(report: ReplayReport) -> str:
    r = report.result
    return json.dumps({
        "ok": report.ok,
        "mismatches": report.mismatches,
        "steps_used": r.steps_used,
        "terminated": r.terminated,
        "answer": r.answer,
        "label": r.label,
        "units": len(r.final_state),
        "cost_k": r.cost_k,
    }, indent=2, ensure_ascii=False)
