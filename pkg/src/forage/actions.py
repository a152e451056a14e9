"""The action space: typed actions, tool schemas and wire-level parsing."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .errors import InvalidArgument, MissingArgument, UnknownTool

FORAGE = frozenset({"Glob", "Grep", "Read", "Scan", "GetFileInfo"})
STATE = frozenset({"Update", "View", "Evaluate"})
AUXILIARY = frozenset({"CountTokens", "TodoWrite", "NormalizeDocument"})
ALL_TOOLS = FORAGE | STATE | AUXILIARY

TODO_STATUSES = ("pending", "in_progress", "done")


@dataclass(frozen=True)
class Param:
    type: str
    description: str
    required: bool = False


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: dict[str, Param] = field(default_factory=dict)
    # at least one of these must be present (for tools with alternative spellings)
    one_of: tuple[str, ...] = ()


_SCOPE = Param("string", "line range 'start-end' to restrict the search to")
_SOURCE = Param("string", "document id or file name; defaults to the task document")

TOOL_SPECS: dict[str, ToolSpec] = {
    spec.name: spec
    for spec in [
        ToolSpec("Glob", "Find candidate source files by shell-style pattern.", {
            "pattern": Param("string", "file pattern, e.g. '*.txt'", True),
            "scope": Param("string", "directory to search under"),
        }),
        ToolSpec("Grep", "Regex search over document lines; returns matching lines with anchors.", {
            "pattern": Param("string", "keyword or regular expression", True),
            "context": Param("integer", "lines of surrounding context per match"),
            "case_insensitive": Param("boolean", "ignore case"),
            "max_matches": Param("integer", "maximum number of matches"),
            "scope": _SCOPE,
            "source": _SOURCE,
        }),
        ToolSpec("Read", "Read a contiguous window of lines at an anchor.", {
            "anchor": Param("string", "anchor 'doc:start-end' or 'start-end'"),
            "offset": Param("integer", "first line to read (alternative to anchor)"),
            "limit": Param("integer", "maximum number of lines"),
            "source": _SOURCE,
        }, one_of=("anchor", "offset")),
        ToolSpec("Scan", "Locate structural markers such as headings or tables; returns anchors only.", {
            "pattern": Param("string", "structural regex, e.g. '^Table [0-9]+'", True),
            "scope": _SCOPE,
            "case_insensitive": Param("boolean", "ignore case"),
            "max_matches": Param("integer", "maximum number of anchors"),
            "source": _SOURCE,
        }),
        ToolSpec("GetFileInfo", "Size and estimated token length of a source.", {
            "source": Param("string", "document id or file name", True),
        }),
        ToolSpec("Update", "Commit distilled statements, each with the anchor of its supporting lines.", {
            "units": Param("array", "list of {content, anchor} objects"),
            "content": Param("string", "single statement to commit (shorthand)"),
            "anchor": Param("string", "anchor for the shorthand statement, or 'e<k>' to reuse unit k's anchor"),
        }, one_of=("units", "content")),
        ToolSpec("View", "Show the full epistemic state.", {
            "state_id": Param("string", "which epistemic state to show", True),
        }),
        ToolSpec("Evaluate", "Diagnose whether the committed state suffices to answer the query.", {}),
        ToolSpec("CountTokens", "Count tokens in a text.", {
            "text": Param("string", "text to count", True),
            "model": Param("string", "tokenizer name"),
        }),
        ToolSpec("TodoWrite", "Replace the working todo list.", {
            "todos": Param("array", "list of {content, status} items (status: pending|in_progress|done)", True),
        }),
        ToolSpec("NormalizeDocument", "Split over-long lines so every line fits one observation.", {
            "source": Param("string", "document id or file name", True),
            "max_length": Param("integer", "maximum characters per line"),
        }),
    ]
}


@dataclass(frozen=True)
class Action:
    kind: str
    args: dict = field(default_factory=dict)

    @property
    def group(self) -> str:
        if self.kind in FORAGE:
            return "forage"
        if self.kind in STATE:
            return "state"
        return "auxiliary"

    def to_dict(self) -> dict:
        return {"name": self.kind, "args": self.args}

    def __str__(self) -> str:
        return f"{self.kind}({json.dumps(self.args, ensure_ascii=False, sort_keys=True)})"


def _coerce(name: str, kind: str, value: Any) -> Any:
    if kind == "string":
        if isinstance(value, (dict, list)):
            raise InvalidArgument(f"{name} must be a string")
        return str(value)
    if kind == "integer":
        if isinstance(value, bool):
            raise InvalidArgument(f"{name} must be an integer")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise InvalidArgument(f"{name} must be an integer, got {value!r}") from None
    if kind == "boolean":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise InvalidArgument(f"{name} must be a boolean, got {value!r}")
    return value


def _units(args: dict) -> list[dict]:
    raw = args.get("units")
    if raw is None:
        raw = [{"content": args.get("content"), "anchor": args.get("anchor")}]
    if isinstance(raw, dict):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        raise InvalidArgument("units must be a nonempty list of {content, anchor}")
    out = []
    for u in raw:
        if not isinstance(u, dict):
            raise InvalidArgument("each unit must be an object with content and anchor")
        content = u.get("content")
        if not isinstance(content, str) or not content.strip():
            raise InvalidArgument("unit content must be a nonempty string")
        anchor = u.get("anchor")
        out.append({"content": content, "anchor": anchor if isinstance(anchor, (dict, type(None))) else str(anchor)})
    return out


def _todos(raw) -> list[dict]:
    if isinstance(raw, str):
        raw = [{"content": raw, "status": "pending"}]
    if not isinstance(raw, list):
        raise InvalidArgument("todos must be a list")
    out = []
    for item in raw:
        if isinstance(item, str):
            item = {"content": item}
        if not isinstance(item, dict) or not str(item.get("content", "")).strip():
            raise InvalidArgument("each todo needs content")
        status = item.get("status", "pending")
        if status not in TODO_STATUSES:
            raise InvalidArgument(f"todo status must be one of {TODO_STATUSES}, got {status!r}")
        out.append({"content": str(item["content"]), "status": status})
    return out


def make_action(kind: str, args: dict | None = None) -> Action:
    """Validate ``args`` for ``kind`` and return the canonical :class:`Action`."""
    spec = TOOL_SPECS.get(kind)
    if spec is None:
        raise UnknownTool(f"unknown tool {kind!r}; available: {sorted(TOOL_SPECS)}")
    args = dict(args or {})
    clean: dict[str, Any] = {}
    for pname, param in spec.params.items():
        value = args.get(pname)
        if value is None:
            if param.required:
                raise MissingArgument(f"{kind} requires argument {pname!r}")
            continue
        clean[pname] = _coerce(pname, param.type, value)
    if spec.one_of and not any(k in clean for k in spec.one_of):
        raise MissingArgument(f"{kind} requires one of {', '.join(spec.one_of)}")
    if kind in ("Grep", "Scan") and not clean["pattern"]:
        raise InvalidArgument(f"{kind} pattern must be nonempty")
    if kind == "Update":
        clean = {"units": _units(clean)}
    elif kind == "TodoWrite":
        clean["todos"] = _todos(clean["todos"])
    elif kind == "Read" and clean.get("limit") is not None and clean["limit"] < 1:
        raise InvalidArgument("limit must be >= 1")
    return Action(kind, clean)


def parse_action(raw) -> Action:
    """Map a wire-level tool call onto an :class:`Action`.

    Accepts ``{"name", "args"}``, ``{"name", "arguments": "<json>"}``, an
    OpenAI ``{"function": {...}}`` entry, or any object with ``name`` and
    ``args`` attributes.
    """
    if hasattr(raw, "name") and hasattr(raw, "args"):
        name, args = raw.name, raw.args
    elif isinstance(raw, dict):
        if "function" in raw and isinstance(raw["function"], dict):
            raw = raw["function"]
        name = raw.get("name")
        args = raw.get("args", raw.get("arguments"))
    else:
        raise InvalidArgument(f"cannot interpret tool call {raw!r}")
    if isinstance(args, str):
        try:
            args = json.loads(args) if args.strip() else {}
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"arguments are not valid JSON: {exc}") from None
    if args is None:
        args = {}
    if not isinstance(args, dict):
        raise InvalidArgument("arguments must be an object")
    if not isinstance(name, str):
        raise UnknownTool(f"tool name must be a string, got {name!r}")
    return make_action(name, args)


def tool_schemas(names) -> list[dict]:
    """OpenAI-style ``tools`` entries for the given tool names, sorted."""
    out = []
    for name in sorted(names):
        spec = TOOL_SPECS[name]
        props = {}
        for pname, p in spec.params.items():
            schema: dict[str, Any] = {"type": p.type, "description": p.description}
            if p.type == "array":
                schema["items"] = {"type": "object"}
            props[pname] = schema
        out.append({
            "type": "function",
            "function": {
                "name": name,
                "description": spec.description,
                "parameters": {
                    "type": "object",
                    "properties": props,
                    "required": [k for k, p in spec.params.items() if p.required],
                },
            },
        })
    return out


def tool_catalog(names) -> str:
    lines = []
    for name in sorted(names):
        spec = TOOL_SPECS[name]
        params = ", ".join(f"{k}{'' if p.required else '?'}" for k, p in spec.params.items())
        lines.append(f"- {name}({params}): {spec.description}")
    return "\n".join(lines)
