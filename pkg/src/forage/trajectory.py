"""JSONL trajectory logs: writing, reading and the branch-purity audit.

A log is a header record, one record per step, and a footer record. Step
records carry the state fingerprint and diagnosis *after* the step, which is
what the auditor needs to check per-branch mutation rules offline.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .actions import FORAGE
from .state import EpistemicState

EMPTY_DIGEST = EpistemicState().digest()


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def step_record(step) -> dict:
    return {
        "type": "step",
        "t": step.index,
        "action": step.action.to_dict(),
        "observation": step.observation,
        "usage": step.usage.to_dict(),
        "wall_ms": step.wall_ms,
        "state": {"size": step.state_size, "digest": step.state_digest},
        "diagnosis": step.diagnosis,
    }


class TrajectoryWriter:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        self._lock = threading.Lock()

    def write(self, record: dict) -> None:
        with self._lock:
            self._fh.write(_dumps(record) + "\n")
            self._fh.flush()

    def header(self, **fields) -> None:
        self.write({"type": "header", **fields})

    def step(self, step) -> None:
        self.write(step_record(step))

    def footer(self, **fields) -> None:
        self.write({"type": "footer", **fields})

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class Trajectory:
    header: dict = field(default_factory=dict)
    steps: list[dict] = field(default_factory=list)
    footer: dict = field(default_factory=dict)

    @property
    def records(self) -> list[dict]:
        out = [self.header] if self.header else []
        out.extend(self.steps)
        if self.footer:
            out.append(self.footer)
        return out


def parse_records(records: Iterable[dict]) -> Trajectory:
    traj = Trajectory()
    for rec in records:
        kind = rec.get("type", "step")
        if kind == "header":
            traj.header = rec
        elif kind == "footer":
            traj.footer = rec
        else:
            traj.steps.append(rec)
    return traj


def read_trajectory(path) -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        return parse_records(json.loads(line) for line in fh if line.strip())


def audit(trajectory: Trajectory) -> list[str]:
    """Check per-branch mutation rules; returns human-readable violations.

    Foraging leaves state and diagnosis alone, Update may only grow the
    state, Evaluate may only replace the diagnosis, and everything else
    touches neither. Step indices must run 0..T-1.
    """
    problems = []
    size, digest, diag = 0, EMPTY_DIGEST, None
    for i, rec in enumerate(trajectory.steps):
        t = rec.get("t")
        if t != i:
            problems.append(f"step {i}: index {t} out of sequence")
        kind = rec["action"]["name"]
        new_size = rec["state"]["size"]
        new_digest = rec["state"]["digest"]
        new_diag = rec.get("diagnosis")
        state_changed = new_digest != digest
        diag_changed = new_diag != diag
        if new_size < size:
            problems.append(f"step {t}: state shrank from {size} to {new_size}")
        if kind in FORAGE or kind not in ("Update", "Evaluate"):
            if state_changed:
                problems.append(f"step {t}: {kind} changed the epistemic state")
            if diag_changed:
                problems.append(f"step {t}: {kind} changed the diagnosis")
        elif kind == "Update":
            if diag_changed:
                problems.append(f"step {t}: Update changed the diagnosis")
        elif kind == "Evaluate":
            if state_changed:
                problems.append(f"step {t}: Evaluate changed the epistemic state")
        size, digest, diag = new_size, new_digest, new_diag
    if trajectory.footer and "steps_used" in trajectory.footer:
        if trajectory.footer["steps_used"] != len(trajectory.steps):
            problems.append("footer steps_used disagrees with the number of step records")
    return problems
