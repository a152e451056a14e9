"""The foraging loop: act, observe, commit, diagnose, then answer from state.

``run_episode`` follows the loop structure exactly: foraging actions only
observe the document, ``Update`` only grows the epistemic state,
``Evaluate`` only replaces the diagnosis, anything else touches neither.
The final answer request is built from the query and the rendered state;
the ``react`` ablation answers from the trace instead.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import tokens
from .actions import ALL_TOOLS, AUXILIARY, FORAGE, STATE, Action
from .diagnosis import GapDiagnosis, diagnose, is_terminal
from .env import DocumentEnv
from .errors import (
    BackendError,
    EpisodeError,
    ForageError,
    ScriptExhausted,
    UnparsableAction,
)
from .gateway import ChatBackend, ChatRequest, CostLedger, MeteredBackend
from .policy import DEFAULT_CONTEXT_BUDGET, Policy, Step, TodoList, Trace, render_trace
from .state import EpistemicState, GroundingMode, commit, render, resolve_anchor
from .trajectory import TrajectoryWriter

logger = logging.getLogger(__name__)

MODES = ("scout", "react", "no_forage", "no_file_tools", "no_grounding")

ANSWER_PROMPT = """Answer the question using only the evidence listed below.
If the evidence does not settle it, give your best guess anyway."""

CHOICE_HINT = "Begin your answer with the option label in parentheses, e.g. (A)."


@dataclass(frozen=True)
class EpisodeConfig:
    t_max: int = 50
    mode: str = "scout"
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    observation_budget: int = 4000
    seed: int = 0
    window: int | None = None
    tokenizer: str | None = None
    auxiliary_tools: bool = True
    policy_retries: int = 1
    diagnosis_retries: int = 2

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.context_budget <= 0 or self.observation_budget <= 0:
            raise ValueError("budgets must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def grounding(self) -> GroundingMode:
        return GroundingMode.OFF if self.mode == "no_grounding" else GroundingMode.STRICT

    def tools(self) -> frozenset[str]:
        aux = AUXILIARY if self.auxiliary_tools else frozenset()
        if self.mode == "no_forage":
            # no document access at all: nothing can be read, so nothing can be committed
            return frozenset({"View", "Evaluate"}) | (aux - {"NormalizeDocument"})
        if self.mode == "no_file_tools":
            return frozenset({"Read", "GetFileInfo"}) | STATE
        return FORAGE | STATE | aux


@dataclass(frozen=True)
class Instance:
    id: str
    query: str
    document: Path
    gold: str | None = None
    choices: dict[str, str] | None = None

    def __post_init__(self):
        if not self.query.strip():
            raise ValueError("query must be nonempty")
        object.__setattr__(self, "document", Path(self.document))
        if self.choices is not None and not isinstance(self.choices, dict):
            object.__setattr__(self, "choices", _label_choices(self.choices))

    @classmethod
    def from_dict(cls, record: dict, doc_root=None) -> "Instance":
        path = Path(record["doc_path"])
        if doc_root is not None and not path.is_absolute():
            path = Path(doc_root) / path
        choices = record.get("choices")
        return cls(
            id=str(record["id"]),
            query=record["query"],
            document=path,
            gold=record.get("gold"),
            choices=_label_choices(choices) if choices is not None else None,
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "query": self.query,
            "doc_path": str(self.document),
            "gold": self.gold,
            "choices": self.choices,
        }


def _label_choices(choices) -> dict[str, str]:
    if isinstance(choices, dict):
        return {str(k): str(v) for k, v in choices.items()}
    return {chr(ord("A") + i): str(c) for i, c in enumerate(choices)}


@dataclass(frozen=True)
class Backends:
    policy: ChatBackend
    diagnosis: ChatBackend
    answer: ChatBackend

    @classmethod
    def single(cls, backend: ChatBackend) -> "Backends":
        return cls(backend, backend, backend)


@dataclass(frozen=True)
class AnswerRequest:
    """Everything the answer step may see. There is deliberately no trace field."""

    query: str
    state_rendering: str
    choices: dict[str, str] | None = None

    def to_messages(self) -> list[dict]:
        user = f"Question:\n{self.query}\n"
        if self.choices:
            user += "\nOptions:\n" + "\n".join(f"({k}) {v}" for k, v in self.choices.items()) + "\n"
            user += CHOICE_HINT + "\n"
        user += f"\nEvidence:\n{self.state_rendering}"
        return [{"role": "system", "content": ANSWER_PROMPT}, {"role": "user", "content": user}]


@dataclass
class EpisodeResult:
    answer: str
    steps_used: int
    terminated: str
    final_state: EpistemicState
    trace_ref: str | None
    cost_k: float
    wall_ms: float
    label: str | None = None
    diagnosis: GapDiagnosis | None = None
    trace: Trace = field(default_factory=Trace)
    ledger: CostLedger = field(default_factory=CostLedger)


# -- answering --------------------------------------------------------------


def extract_choice(text: str, labels) -> str | None:
    """First standalone option label in ``text`` (``(C)``, ``C)``, ``C.``, ``C``)."""
    labels = [str(lbl) for lbl in labels]
    if not text or not labels:
        return None
    alt = "|".join(re.escape(lbl) for lbl in sorted(labels, key=len, reverse=True))
    stripped = text.strip()
    if re.fullmatch(rf"\(?({alt})\)?\.?", stripped, re.IGNORECASE):
        m = re.match(rf"\(?({alt})", stripped, re.IGNORECASE)
        return next(lbl for lbl in labels if lbl.lower() == m.group(1).lower())
    for pattern in (rf"\(({alt})\)", rf"(?<![\w'])({alt})(?=[).:](?:\s|$))", rf"(?<![\w'])({alt})(?![\w'])"):
        m = re.search(pattern, text)
        if m:
            return m.group(1)
    return None


def answer_decoupled(
    query: str,
    state: EpistemicState,
    choices: dict[str, str] | None,
    backend: ChatBackend,
    seed: int | None = None,
) -> str:
    request = AnswerRequest(query, render(state), choices)
    response = backend.chat(ChatRequest(request.to_messages(), seed=seed or None))
    return (response.text or response.payload()).strip()


def answer_react(
    query: str,
    trace: Trace,
    backend: ChatBackend,
    choices: dict[str, str] | None = None,
    window: int | None = None,
    budget: int = DEFAULT_CONTEXT_BUDGET,
    tokenizer: str | None = None,
    seed: int | None = None,
) -> str:
    """History-as-state answering (ablation): the trace replaces the state."""
    user = f"Question:\n{query}\n"
    if choices:
        user += "\nOptions:\n" + "\n".join(f"({k}) {v}" for k, v in choices.items()) + "\n" + CHOICE_HINT + "\n"
    steps = list(trace)
    if window is not None:
        steps = steps[-window:] if window > 0 else []
    if steps:
        history = render_trace(steps, elided=len(trace) - len(steps))
        room = budget - tokens.count_tokens(user, tokenizer) - 16
        history, _ = tokens.truncate_to_tokens(history, max(room, 0), tokenizer)
        user += f"\nInteraction history:\n{history}"
    messages = [{"role": "system", "content": ANSWER_PROMPT.replace("evidence listed below", "interaction history below")},
                {"role": "user", "content": user}]
    response = backend.chat(ChatRequest(messages, seed=seed or None))
    return (response.text or response.payload()).strip()


# -- dispatch ---------------------------------------------------------------


def _format_grep(matches) -> str:
    if not matches:
        return "No matches found."
    blocks = []
    for m in matches:
        n = m.anchor.start_line
        lines = [f"  L{n - len(m.context_before) + i}: {c}" for i, c in enumerate(m.context_before)]
        lines.append(f"L{n} [{m.anchor}]: {m.line}")
        lines += [f"  L{n + 1 + i}: {c}" for i, c in enumerate(m.context_after)]
        blocks.append("\n".join(lines))
    out = "\n".join(blocks)
    if matches.truncated:
        out += f"\n[results truncated after {len(matches)} matches]"
    return out


def _format_read(obs) -> str:
    start = obs.anchor.start_line
    end = obs.shown_end if obs.shown_end is not None else obs.anchor.end_line
    head = f"[{obs.anchor}] lines {start}-{end}"
    if obs.truncated:
        head += f" (truncated: {obs.reason})"
    body = "\n".join(f"{start + i:>6}\t{line}" for i, line in enumerate(obs.text.split("\n"))) if obs.text else ""
    return f"{head}\n{body}" if body else head


def dispatch_action(
    action: Action,
    env: DocumentEnv,
    state: EpistemicState,
    diagnosis_backend: ChatBackend,
    todo: TodoList,
    *,
    query: str,
    g: GapDiagnosis | None = None,
    step: int = 0,
    default_doc: str | None = None,
    mode: str = "scout",
    tools=ALL_TOOLS,
    grounding: GroundingMode = GroundingMode.STRICT,
    tokenizer: str | None = None,
    seed: int | None = None,
    diagnosis_retries: int = 2,
) -> tuple[str, EpistemicState, GapDiagnosis | None]:
    """Execute one action; returns ``(observation, state, diagnosis)``.

    Tool failures become ``ERROR: ...`` observations so the policy can react.
    Backend failures propagate.
    """
    kind, args = action.kind, action.args
    if kind not in tools:
        return f"ERROR: {kind} is not available in mode {mode}", state, g

    def doc_of(source=None):
        return env.resolve(source) if source else env.resolve(default_doc)

    try:
        if kind == "GetFileInfo":
            doc = doc_of(args["source"])
            return json.dumps({"source": doc, **env.get_file_info(doc).to_dict()}), state, g
        if kind == "Glob":
            ids = env.glob(args["pattern"], args.get("scope"))
            return ("\n".join(ids) if ids else "No files matched."), state, g
        if kind == "Grep":
            matches = env.grep(
                doc_of(args.get("source")), args["pattern"],
                context=args.get("context"),
                case_insensitive=args.get("case_insensitive", False),
                max_matches=args.get("max_matches"),
                scope=args.get("scope"),
            )
            return _format_grep(matches), state, g
        if kind == "Scan":
            anchors = env.scan(
                doc_of(args.get("source")), args["pattern"],
                scope=args.get("scope"),
                case_insensitive=args.get("case_insensitive", False),
                max_matches=args.get("max_matches"),
            )
            if not anchors:
                return "No locations found.", state, g
            out = "\n".join(f"Line {a.start_line} [{a}]" for a in anchors)
            if anchors.truncated:
                out += f"\n[locations truncated after {len(anchors)}]"
            return out, state, g
        if kind == "Read":
            doc = doc_of(args.get("source"))
            if "anchor" in args:
                anchor = resolve_anchor(args["anchor"], state, doc, env)
                obs = env.read(anchor, args.get("limit"))
            else:
                obs = env.read_lines(doc, args["offset"], args.get("limit"))
            return _format_read(obs), state, g
        if kind == "Update":
            if mode == "no_forage":
                return "ERROR: the document is inaccessible in this mode; nothing can be committed", state, g
            new = commit(state, args["units"], step, grounding, env, default_doc)
            note = "" if len(new) > len(state) else "No new units (exact duplicates are dropped).\n"
            return note + render(new), new, g
        if kind == "View":
            if args["state_id"] != state.state_id:
                return f"ERROR: unknown epistemic state {args['state_id']!r}; the current one is {state.state_id!r}", state, g
            return render(state), state, g
        if kind == "Evaluate":
            new_g = diagnose(query, state, diagnosis_backend, retries=diagnosis_retries, seed=seed or None)
            return new_g.serialize(), state, new_g
        if kind == "CountTokens":
            name = args.get("model") or tokenizer or tokens.DEFAULT_TOKENIZER
            return f"{env.count_tokens(args['text'], name)} tokens ({name})", state, g
        if kind == "TodoWrite":
            todo.replace(args["todos"])
            return todo.render(), state, g
        if kind == "NormalizeDocument":
            info = env.normalize_document(doc_of(args["source"]), args.get("max_length"))
            return json.dumps({"normalized": True, **info.to_dict()}), state, g
    except (BackendError, ScriptExhausted):
        raise
    except ForageError as exc:
        return f"ERROR: {type(exc).__name__}: {exc}", state, g
    except (KeyError, ValueError, TypeError) as exc:
        return f"ERROR: bad arguments for {kind}: {exc}", state, g
    raise AssertionError(f"no dispatcher arm for {kind}")


# -- episode ----------------------------------------------------------------


def run_episode(
    instance: Instance,
    config: EpisodeConfig,
    backends: Backends,
    env: DocumentEnv,
    log_path=None,
) -> EpisodeResult:
    started = time.perf_counter()
    handle = env.register_document(instance.document)
    doc_id = handle.id
    tools = config.tools()
    ledger = CostLedger()
    policy_backend = MeteredBackend(backends.policy, ledger, "policy", config.tokenizer)
    diag_backend = MeteredBackend(backends.diagnosis, ledger, "evaluate", config.tokenizer)
    answer_backend = MeteredBackend(backends.answer, ledger, "answer", config.tokenizer)
    policy = Policy(
        policy_backend,
        tools=tools,
        window=config.window,
        context_budget=config.context_budget,
        tokenizer=config.tokenizer,
        retries=config.policy_retries,
        seed=config.seed or None,
    )
    query = instance.query
    if instance.choices:
        query += "\nOptions: " + " ".join(f"({k}) {v}" for k, v in instance.choices.items())

    writer = TrajectoryWriter(log_path) if log_path is not None else None
    if writer:
        writer.header(instance=instance.to_dict(), doc_id=doc_id, config=asdict(config), mode=config.mode)

    trace = Trace()
    state = EpistemicState()
    g: GapDiagnosis | None = None
    todo = TodoList()
    t = 0

    def fail(exc: Exception):
        if writer:
            writer.footer(error=f"{type(exc).__name__}: {exc}", steps_used=len(trace), cost_k=ledger.total.total / 1000)
            writer.close()
        return EpisodeError(f"episode {instance.id} failed at step {t}: {exc}", trace, ledger)

    try:
        while t < config.t_max and not is_terminal(g):
            t0 = time.perf_counter()
            mark = len(ledger)
            action = policy.decide(query, trace, state)
            obs, state, g = dispatch_action(
                action, env, state, diag_backend, todo,
                query=query, g=g, step=t, default_doc=doc_id, mode=config.mode, tools=tools,
                grounding=config.grounding, tokenizer=config.tokenizer, seed=config.seed,
                diagnosis_retries=config.diagnosis_retries,
            )
            step = Step(
                index=t,
                action=action,
                observation=obs,
                usage=ledger.since(mark),
                wall_ms=round((time.perf_counter() - t0) * 1000, 3),
                state_size=len(state),
                state_digest=state.digest(),
                diagnosis=g.to_dict() if g is not None else None,
            )
            trace.append(step)
            if writer:
                writer.step(step)
            t += 1

        if config.mode == "react":
            answer = answer_react(
                instance.query, trace, answer_backend, instance.choices,
                config.window, config.context_budget, config.tokenizer, config.seed,
            )
        else:
            answer = answer_decoupled(instance.query, state, instance.choices, answer_backend, config.seed)
    except (BackendError, ScriptExhausted, UnparsableAction) as exc:
        raise fail(exc) from exc

    terminated = "sufficient" if is_terminal(g) else "budget_exhausted"
    label = extract_choice(answer, instance.choices) if instance.choices else None
    cost_k = ledger.total.total / 1000
    wall_ms = round((time.perf_counter() - started) * 1000, 3)
    if writer:
        writer.footer(
            answer=answer, label=label, terminated=terminated, final_state=state.to_json(),
            cost_k=cost_k, steps_used=len(trace), wall_ms=wall_ms,
        )
        writer.close()
    logger.info("episode %s: %d steps, %s, cost %.2fk", instance.id, len(trace), terminated, cost_k)
    return EpisodeResult(
        answer=answer,
        steps_used=len(trace),
        terminated=terminated,
        final_state=state,
        trace_ref=str(log_path) if log_path is not None else None,
        cost_k=cost_k,
        wall_ms=wall_ms,
        label=label,
        diagnosis=g,
        trace=trace,
        ledger=ledger,
    )
