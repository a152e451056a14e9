"""Gap diagnosis: a schema-fixed assessment of the state against the query.

The diagnosis prompt is built from the query and the rendered epistemic
state only. Nothing from the procedural trace can reach it.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import SchemaViolation
from .gateway import ChatBackend, ChatRequest
from .state import EpistemicState, render

PARSE_RETRIES = 2

SYSTEM_PROMPT = """You audit whether a body of committed evidence is sufficient to answer a question.
You see only the question and the committed evidence units. Judge the evidence, not your prior knowledge.
Reply with a single JSON object and nothing else:
{"is_sufficient": <true|false>, "missing_info": [<string>, ...], "reasoning": <string>, "confidence": <number in [0,1]>}
Rules: if is_sufficient is true, missing_info must be []. If false, list each missing piece of information."""

_FENCE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.DOTALL)


@dataclass(frozen=True)
class GapDiagnosis:
    is_sufficient: bool
    missing_info: tuple[str, ...] = field(default_factory=tuple)
    reasoning: str = ""
    confidence: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "missing_info", tuple(self.missing_info))
        if self.is_sufficient and self.missing_info:
            raise SchemaViolation("a sufficient diagnosis cannot list missing information")
        if not self.is_sufficient and not self.missing_info:
            raise SchemaViolation("an insufficient diagnosis must list missing information")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise SchemaViolation(f"confidence {self.confidence} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "is_sufficient": self.is_sufficient,
            "missing_info": list(self.missing_info),
            "reasoning": self.reasoning,
            "confidence": self.confidence,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def parse_diagnosis(raw: str) -> GapDiagnosis:
    """Strict parse of the diagnosis schema. Unknown keys are ignored.

    ``is_sufficient`` and ``missing_info`` are required; ``reasoning`` and
    ``confidence`` may be omitted. A surrounding markdown code fence is
    tolerated.
    """
    text = (raw or "").strip()
    m = _FENCE.match(text)
    if m:
        text = m.group(1)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"diagnosis is not JSON: {exc}", raw) from None
    if not isinstance(data, dict):
        raise SchemaViolation("diagnosis must be a JSON object", raw)
    for key in ("is_sufficient", "missing_info"):
        if key not in data:
            raise SchemaViolation(f"diagnosis lacks required field {key!r}", raw)
    sufficient = data["is_sufficient"]
    if not isinstance(sufficient, bool):
        raise SchemaViolation("is_sufficient must be a boolean", raw)
    missing = data["missing_info"]
    if not isinstance(missing, list) or not all(isinstance(x, str) for x in missing):
        raise SchemaViolation("missing_info must be a list of strings", raw)
    reasoning = data.get("reasoning", "")
    if not isinstance(reasoning, str):
        raise SchemaViolation("reasoning must be a string", raw)
    confidence = data.get("confidence")
    if confidence is not None:
        if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
            raise SchemaViolation("confidence must be a number", raw)
        confidence = float(confidence)
    try:
        return GapDiagnosis(sufficient, tuple(missing), reasoning, confidence)
    except SchemaViolation as exc:
        raise SchemaViolation(str(exc), raw) from None


def diagnosis_messages(query: str, state: EpistemicState) -> list[dict]:
    user = f"Question:\n{query}\n\nCommitted evidence:\n{render(state)}"
    return [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": user}]


def diagnose(
    query: str,
    state: EpistemicState,
    backend: ChatBackend,
    retries: int = PARSE_RETRIES,
    seed: int | None = None,
) -> GapDiagnosis:
    if not query.strip():
        raise ValueError("query must be nonempty")
    messages = diagnosis_messages(query, state)
    last: SchemaViolation | None = None
    for _ in range(retries + 1):
        response = backend.chat(ChatRequest(messages, temperature=0.0, seed=seed))
        raw = response.text or ""
        try:
            return parse_diagnosis(raw)
        except SchemaViolation as exc:
            last = exc
            messages = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": f"That reply broke the schema ({exc}). Reply again with only the JSON object."},
            ]
    assert last is not None
    raise last


def is_terminal(g: GapDiagnosis | None) -> bool:
    """True only for an actual diagnosis that declares sufficiency."""
    return g is not None and g.is_sufficient

