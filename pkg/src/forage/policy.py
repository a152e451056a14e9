"""Acting policy: trace bookkeeping, prompt assembly and action decoding."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import tokens
from .actions import ALL_TOOLS, Action, make_action, parse_action, tool_catalog, tool_schemas
from .errors import ActionError, ScriptExhausted, UnparsableAction
from .gateway import ChatBackend, ChatRequest, MockBackend, ToolCall, Usage
from .state import EpistemicState, render

DEFAULT_CONTEXT_BUDGET = 32_000
ELISION = "[... {n} earlier steps elided ...]"

SYSTEM_PROMPT = """You answer questions about a long document that you cannot see in full.
Explore it with the foraging tools (Grep, Scan, Read, Glob, GetFileInfo); read only small windows.
Whenever an observation establishes something relevant, commit it with Update as a short
self-contained statement plus the anchor of the lines that support it. Only the committed
epistemic state is available when the final answer is written; the exploration history is not.
Call Evaluate to check whether the state is sufficient; it tells you what is still missing.
Call exactly one tool per turn."""


@dataclass(frozen=True)
class Step:
    index: int
    action: Action
    observation: str
    usage: Usage = field(default_factory=Usage)
    wall_ms: float = 0.0
    state_size: int = 0
    state_digest: str = ""
    diagnosis: dict | None = None

    def render(self) -> str:
        return f"[t={self.index}] {self.action}\n{self.observation}"


class Trace:
    """Append-only procedural history of (action, observation) steps."""

    def __init__(self, steps: Iterable[Step] = ()):
        self._steps: list[Step] = []
        for s in steps:
            self.append(s)

    def append(self, step: Step) -> None:
        if step.index != len(self._steps):
            raise ValueError(f"step index {step.index} breaks the sequence at {len(self._steps)}")
        self._steps.append(step)

    def __len__(self) -> int:
        return len(self._steps)

    def __iter__(self):
        return iter(self._steps)

    def __getitem__(self, i):
        return self._steps[i]

    @property
    def steps(self) -> tuple[Step, ...]:
        return tuple(self._steps)


class TodoList:
    def __init__(self):
        self.items: list[dict] = []

    def replace(self, todos: list[dict]) -> None:
        self.items = [dict(t) for t in todos]

    def render(self) -> str:
        if not self.items:
            return "Todo list is empty."
        marks = {"pending": "[ ]", "in_progress": "[~]", "done": "[x]"}
        return "\n".join(f"{marks[t['status']]} {t['content']}" for t in self.items)


def render_trace(steps: Iterable[Step], elided: int = 0) -> str:
    parts = [ELISION.format(n=elided)] if elided else []
    parts.extend(s.render() for s in steps)
    return "\n\n".join(parts)


def assemble_policy_context(
    query: str,
    trace: Trace,
    state: EpistemicState,
    window: int | None = None,
    budget: int = DEFAULT_CONTEXT_BUDGET,
    tools: Iterable[str] = ALL_TOOLS,
    tokenizer: str | None = None,
) -> str:
    """Render the acting prompt: query, tools, state, and the newest steps.

    At most ``window`` recent steps are shown (all when ``None``); older ones
    are replaced by an elision marker, and more are dropped (the oldest
    first, then the newest step's observation is cut) until the prompt fits
    ``budget`` tokens.
    """
    head = (
        f"## Query\n{query}\n\n## Tools\n{tool_catalog(tools)}\n\n"
        f"## Epistemic state\n{render(state)}\n\n## Trace\n"
    )
    count = lambda s: tokens.count_tokens(s, tokenizer)  # noqa: E731
    if count(head) > budget:
        text, _ = tokens.truncate_to_tokens(head, budget, tokenizer)
        return text
    steps = list(trace)
    if window is not None:
        steps = steps[-window:] if window > 0 else []
    # generous reserve for the elision marker and separators
    reserve = count(ELISION.format(n=len(trace))) + 2
    room = budget - count(head) - reserve
    kept: list[Step] = []
    for s in reversed(steps):
        cost = count(s.render()) + 1
        if cost <= room:
            kept.append(s)
            room -= cost
            continue
        if not kept and room > 0:
            header = f"[t={s.index}] {s.action}\n"
            obs, _ = tokens.truncate_to_tokens(s.observation, max(room - count(header) - 8, 0), tokenizer)
            kept.append(Step(s.index, s.action, obs + "\n[observation truncated]", s.usage))
        break
    kept.reverse()
    body = render_trace(kept, elided=len(trace) - len(kept)) if trace else "(no steps yet)"
    prompt = head + body
    if count(prompt) > budget:
        prompt, _ = tokens.truncate_to_tokens(prompt, budget, tokenizer)
    return prompt


class Policy:
    """Asks a chat backend for the next action and decodes its tool call.

    A reply without a usable tool call is re-asked ``retries`` times with the
    error explained, then :class:`UnparsableAction` is raised.
    """

    def __init__(
        self,
        backend: ChatBackend,
        tools: Iterable[str] = ALL_TOOLS,
        window: int | None = None,
        context_budget: int = DEFAULT_CONTEXT_BUDGET,
        tokenizer: str | None = None,
        retries: int = 1,
        seed: int | None = None,
    ):
        self.backend = backend
        self.tools = frozenset(tools)
        self.window = window
        self.context_budget = context_budget
        self.tokenizer = tokenizer
        self.retries = retries
        self.seed = seed

    def context(self, query: str, trace: Trace, state: EpistemicState) -> str:
        return assemble_policy_context(
            query, trace, state, self.window, self.context_budget, self.tools, self.tokenizer
        )

    def decide(self, query: str, trace: Trace, state: EpistemicState) -> Action:
        messages = [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": self.context(query, trace, state)},
        ]
        schemas = tool_schemas(self.tools)
        problem = ""
        for _ in range(self.retries + 1):
            response = self.backend.chat(ChatRequest(messages, tools=schemas, seed=self.seed))
            if response.tool_call is None:
                problem = "the reply contained no tool call"
            else:
                try:
                    return parse_action(response.tool_call)
                except ActionError as exc:
                    problem = str(exc)
            messages = messages + [
                {"role": "assistant", "content": response.payload()},
                {"role": "user", "content": f"Your reply could not be used: {problem}. Call exactly one tool."},
            ]
        raise UnparsableAction(f"no valid action after {self.retries + 1} attempts: {problem}")


def decide(query: str, trace: Trace, state: EpistemicState, backend: ChatBackend, **kwargs) -> Action:
    return Policy(backend, **kwargs).decide(query, trace, state)


# -- scripted replay --------------------------------------------------------


class Script:
    """A recorded action sequence consumed front to back."""

    def __init__(self, actions: Iterable[Action]):
        self.actions = list(actions)
        self.cursor = 0

    def __len__(self) -> int:
        return len(self.actions)

    def next(self) -> Action:
        if self.cursor >= len(self.actions):
            raise ScriptExhausted(f"script of {len(self.actions)} actions is exhausted")
        action = self.actions[self.cursor]
        self.cursor += 1
        return action

    def to_backend(self, tail: Iterable = ()) -> MockBackend:
        """Mock chat backend emitting the remaining actions, then ``tail``."""
        calls = [ToolCall(a.kind, a.args) for a in self.actions[self.cursor:]]
        return MockBackend([*calls, *tail])

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "Script":
        actions = []
        for rec in records:
            kind = rec.get("type")
            if kind in ("header", "footer"):
                continue
            raw = rec.get("action", rec)
            actions.append(parse_action(raw))
        return cls(actions)

    @classmethod
    def load(cls, path) -> "Script":
        """Read a JSONL script; trajectory logs are accepted as-is."""
        records = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(json.loads(line))
        return cls.from_records(records)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for a in self.actions:
                fh.write(json.dumps(a.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def scripted_next(script: Script) -> Action:
    return script.next()


__all__ = [
    "Action",
    "Policy",
    "Script",
    "Step",
    "TodoList",
    "Trace",
    "assemble_policy_context",
    "decide",
    "make_action",
    "render_trace",
    "scripted_next",
]
