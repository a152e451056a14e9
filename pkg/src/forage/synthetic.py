"""Needle-in-a-haystack instances and rule-based backends that solve them.

The heuristic backends stand in for a model: they read only the prompts the
loop sends them, so they exercise the full request path (policy context,
diagnosis prompt, decoupled answer request) without a network.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .controller import Backends, Instance
from .gateway import ChatRequest, ChatResponse, ToolCall, estimate_usage

_WORDS = (
    "amber basalt cedar delta ember fjord glade harbor island juniper kettle lagoon meadow "
    "nectar orchard pebble quarry ridge summit thicket upland valley willow yarrow zephyr "
    "quiet distant narrow gentle hollow bright silver marble copper velvet granite mellow "
    "walks drifts settles rises wanders gathers lingers folds turns rests crosses follows"
).split()
_NAMES = "kestrel osprey heron plover merlin falcon curlew avocet bittern dunlin".split()

QUESTION = 'What is the access code for project "{key}"?'
NEEDLE = "Note: the access code for project {key} is {value}."


@dataclass(frozen=True)
class Needle:
    instance: Instance
    key: str
    value: str
    line: int
    n_tokens: int


def filler_pool(rng: random.Random, size: int = 4000) -> list[str]:
    pool = []
    for _ in range(size):
        words = [rng.choice(_WORDS) for _ in range(rng.randint(8, 16))]
        pool.append(" ".join(words).capitalize() + ".")
    return pool


def haystack_lines(n_tokens: int, rng: random.Random, pool: list[str] | None = None) -> list[str]:
    """Filler lines totalling at least ``n_tokens`` chars4 tokens."""
    pool = pool or filler_pool(rng)
    target = 4 * n_tokens
    lines, size = [], 0
    while size < target:
        batch = rng.choices(pool, k=max(1, (target - size) // 60 + 1))
        for line in batch:
            lines.append(line)
            size += len(line) + 1
            if size >= target:
                break
    return lines


def make_needle(directory, n_tokens: int, rng: random.Random, pool: list[str] | None = None, index: int = 0) -> Needle:
    """Write one haystack with one planted fact and a few decoys."""
    key = f"{rng.choice(_NAMES)}-{rng.randrange(1000, 10000)}"
    value = f"{rng.randrange(10**7, 10**8)}"
    lines = haystack_lines(n_tokens, rng, pool)
    for _ in range(3):
        decoy = f"{rng.choice(_NAMES)}-{rng.randrange(1000, 10000)}"
        if decoy != key:
            lines.insert(rng.randrange(len(lines) + 1), NEEDLE.format(key=decoy, value=rng.randrange(10**7, 10**8)))
    pos = rng.randrange(len(lines) + 1)
    lines.insert(pos, NEEDLE.format(key=key, value=value))
    path = Path(directory) / f"haystack-{n_tokens}-{index}.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    inst = Instance(f"needle-{n_tokens}-{index}", QUESTION.format(key=key), path, value)
    return Needle(inst, key, value, pos + 1, n_tokens)


def needles(directory, n_tokens: int, count: int, seed: int = 0):
    """Yield ``count`` needle instances lazily, so only one file need exist at a time."""
    rng = random.Random(seed * 1_000_003 + n_tokens)
    pool = filler_pool(rng)
    for i in range(count):
        yield make_needle(directory, n_tokens, rng, pool, i)


# -- heuristic backends -----------------------------------------------------

_KEY = re.compile(r'"([^"]+)"')
_STEP = re.compile(r"^\[t=(\d+)\] (\w+)\((.*)\)$", re.MULTILINE)
_HIT = re.compile(r"^L(\d+) \[([^\]]+)\]: (.*)$", re.MULTILINE)
_READ_HEAD = re.compile(r"^\[([^\]]+):(\d+)-(\d+)\]")


def _user_text(request: ChatRequest) -> str:
    return "\n".join(m["content"] for m in request.messages if m["role"] == "user")


def _reply(request: ChatRequest, *, text=None, call=None) -> ChatResponse:
    response = ChatResponse(text=text, tool_call=call)
    return ChatResponse(text, call, estimate_usage(request, response))


class HeuristicPolicy:
    """grep the quoted key, read the hit, commit it, evaluate."""

    def chat(self, request: ChatRequest) -> ChatResponse:
        prompt = _user_text(request)
        m = _KEY.search(prompt)
        key = m.group(1) if m else ""
        trace = prompt.split("## Trace\n", 1)[-1]
        steps = list(_STEP.finditer(trace))
        if not steps:
            return _reply(request, call=ToolCall("Grep", {"pattern": key, "max_matches": 5}))
        last = steps[-1]
        kind, obs = last.group(2), trace[last.end():]
        if kind == "Grep":
            hit = next((h for h in _HIT.finditer(obs) if key in h.group(3)), None)
            if hit is None:
                return _reply(request, call=ToolCall("Evaluate", {}))
            return _reply(request, call=ToolCall("Read", {"anchor": hit.group(2)}))
        if kind == "Read":
            head = _READ_HEAD.search(obs.lstrip("\n"))
            for line in obs.splitlines():
                n, _, text = line.strip().partition("\t")
                if head and n.isdigit() and key in text:
                    anchor = f"{head.group(1)}:{n}-{n}"
                    return _reply(request, call=ToolCall("Update", {"content": text, "anchor": anchor}))
            return _reply(request, call=ToolCall("Evaluate", {}))
        if kind == "Update":
            return _reply(request, call=ToolCall("Evaluate", {}))
        return _reply(request, call=ToolCall("Grep", {"pattern": key, "case_insensitive": True, "max_matches": 5}))


class HeuristicDiagnosis:
    def chat(self, request: ChatRequest) -> ChatResponse:
        prompt = _user_text(request)
        question, _, evidence = prompt.partition("Committed evidence:")
        m = _KEY.search(question)
        found = bool(m) and m.group(1) in evidence
        verdict = {
            "is_sufficient": found,
            "missing_info": [] if found else ["the line stating the access code"],
            "reasoning": "the evidence states the code" if found else "no committed unit names the project",
            "confidence": 0.9 if found else 0.2,
        }
        return _reply(request, text=json.dumps(verdict))


class HeuristicAnswer:
    def chat(self, request: ChatRequest) -> ChatResponse:
        prompt = _user_text(request)
        m = _KEY.search(prompt)
        if m:
            hit = re.search(re.escape(m.group(1)) + r" is (\w+)", prompt)
            if hit:
                return _reply(request, text=hit.group(1))
        return _reply(request, text="unknown")


def heuristic_backends() -> Backends:
    return Backends(HeuristicPolicy(), HeuristicDiagnosis(), HeuristicAnswer())
