"""The epistemic state: append-only, provenance-anchored knowledge units."""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, replace
from typing import Iterable

from .env import Anchor, DocumentEnv
from .errors import DocumentError, InvalidUnit, NotFound, UngroundedUnit

EMPTY_STATE = "Epistemic state is empty: no units committed yet."

_UNIT_REF = re.compile(r"^e(\d+)$")


class GroundingMode(str, enum.Enum):
    STRICT = "strict"
    OFF = "off"


@dataclass(frozen=True)
class EpistemicUnit:
    content: str
    anchor: Anchor | None
    committed_at: int = 0

    def key(self):
        return (self.content, self.anchor)


@dataclass(frozen=True)
class EpistemicState:
    units: tuple[EpistemicUnit, ...] = ()
    state_id: str = "E"

    def __len__(self) -> int:
        return len(self.units)

    def __iter__(self):
        return iter(self.units)

    def to_json(self) -> list[dict]:
        return [
            {
                "index": i,
                "content": u.content,
                "anchor": str(u.anchor) if u.anchor is not None else None,
                "committed_at": u.committed_at,
            }
            for i, u in enumerate(self.units, start=1)
        ]

    @classmethod
    def from_json(cls, records: list[dict], state_id: str = "E") -> "EpistemicState":
        units = tuple(
            EpistemicUnit(
                r["content"],
                Anchor.parse(r["anchor"]) if r.get("anchor") else None,
                int(r.get("committed_at", 0)),
            )
            for r in records
        )
        return cls(units, state_id)

    def digest(self) -> str:
        """Short stable fingerprint, used by the trajectory auditor."""
        blob = json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def resolve_anchor(
    ref,
    state: EpistemicState,
    default_doc: str | None = None,
    env: DocumentEnv | None = None,
) -> Anchor | None:
    """Turn an anchor reference into an :class:`Anchor`.

    Accepts an ``Anchor``, a ``doc:start-end`` string, a mapping with
    ``start_line``/``end_line`` (and optional ``doc``), or ``e<k>`` naming an
    already committed unit whose anchor is reused (synthesis units).
    Textual anchors without an explicit ``@revision`` bind to the current
    revision of the document when ``env`` is given.
    """
    if ref is None or isinstance(ref, Anchor):
        return ref
    if isinstance(ref, dict):
        doc = ref.get("doc") or default_doc
        if doc is None:
            raise InvalidUnit(f"anchor {ref!r} names no document")
        start = int(ref["start_line"])
        anchor = Anchor(doc, start, int(ref.get("end_line", start)))
        explicit_rev = False
    else:
        text = str(ref).strip()
        m = _UNIT_REF.match(text)
        if m:
            k = int(m.group(1))
            if not 1 <= k <= len(state.units):
                raise InvalidUnit(f"anchor {text!r} refers to no committed unit")
            return state.units[k - 1].anchor
        anchor = Anchor.parse(text, default_doc=default_doc)
        explicit_rev = "@" in text
    if env is not None and not explicit_rev:
        try:
            doc_id = env.resolve(anchor.doc)
        except NotFound:
            return anchor
        anchor = replace(anchor, doc=doc_id, revision=env.revision(doc_id))
    return anchor


def validate_grounding(unit: EpistemicUnit, env: DocumentEnv) -> bool:
    if unit.anchor is None:
        return False
    try:
        obs = env.read(unit.anchor)
    except DocumentError:
        return False
    return bool(obs.text.strip())


def commit(
    state: EpistemicState,
    units: Iterable,
    step: int,
    mode: GroundingMode | str = GroundingMode.STRICT,
    env: DocumentEnv | None = None,
    default_doc: str | None = None,
) -> EpistemicState:
    """Append ``(content, anchor)`` pairs to ``state``, returning a new state.

    The batch is all-or-nothing: one ungrounded unit rejects the commit.
    Exact duplicates of existing units are dropped.
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    mode = GroundingMode(mode)
    fresh: list[EpistemicUnit] = []
    for item in units:
        if isinstance(item, EpistemicUnit):
            content, ref = item.content, item.anchor
        elif isinstance(item, dict):
            content, ref = item.get("content"), item.get("anchor")
        else:
            content, ref = item
        if not isinstance(content, str) or not content.strip():
            raise InvalidUnit("unit content must be a nonempty string")
        try:
            anchor = resolve_anchor(ref, state, default_doc, env)
        except (DocumentError, KeyError, ValueError) as exc:
            if mode is GroundingMode.STRICT:
                raise UngroundedUnit(f"unusable anchor {ref!r}: {exc}") from exc
            anchor = None
        unit = EpistemicUnit(content.strip(), anchor, step)
        if mode is GroundingMode.STRICT:
            if env is None:
                raise ValueError("strict grounding needs a document environment")
            if not validate_grounding(unit, env):
                raise UngroundedUnit(f"anchor {anchor} does not resolve to document text", unit)
        fresh.append(unit)

    seen = {u.key() for u in state.units}
    added = []
    for u in fresh:
        if u.key() not in seen:
            seen.add(u.key())
            added.append(u)
    if not added:
        return state
    return EpistemicState(state.units + tuple(added), state.state_id)


def render(state: EpistemicState) -> str:
    if not state.units:
        return EMPTY_STATE
    lines = [f"Epistemic state {state.state_id} ({len(state.units)} units):"]
    for i, u in enumerate(state.units, start=1):
        where = str(u.anchor) if u.anchor is not None else "unanchored"
        body = u.content.replace("\n", "\n     ")
        lines.append(f"[e{i}] {body} [anchor {where}]")
    return "\n".join(lines)
