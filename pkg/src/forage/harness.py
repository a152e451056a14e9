"""Benchmark harness: cost metrics, scoring, full-context baseline, sweeps."""

from __future__ import annotations

import json
import logging
import string
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import tokens
from .controller import (
    AnswerRequest,
    Backends,
    EpisodeConfig,
    EpisodeResult,
    Instance,
    extract_choice,
    run_episode,
)
from .env import DocumentEnv
from .errors import EpisodeError, Unscorable
from .gateway import ChatBackend, ChatRequest, CostLedger, MeteredBackend
from .policy import Trace
from .state import EpistemicState

logger = logging.getLogger(__name__)

BASELINE_PROMPT = "Read the document and answer the question."


def episode_cost(ledger: CostLedger) -> float:
    """Total tokens processed, in thousands: (sum of inputs + sum of outputs) / 1000."""
    entries = ledger.entries if isinstance(ledger, CostLedger) else ledger
    total_in = sum(e.usage.input_tokens for e in entries)
    total_out = sum(e.usage.output_tokens for e in entries)
    return (total_in + total_out) / 1000


def token_efficiency(accuracy_percent: float, mean_cost_k: float) -> float:
    if mean_cost_k == 0:
        raise ZeroDivisionError("token efficiency is undefined at zero cost")
    return accuracy_percent / mean_cost_k


def middle_truncate(tokens_: Sequence, max_len: int) -> list:
    """Keep the first and the last ``max_len // 2`` elements.

    Sequences already within ``max_len`` come back unchanged. For odd caps
    the result is one element shorter than ``max_len``.
    """
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    seq = list(tokens_)
    if len(seq) <= max_len:
        return seq
    half = max_len // 2
    return seq[:half] + seq[len(seq) - half:]


# -- scoring ----------------------------------------------------------------

_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace."""
    out = []
    for ch in unicodedata.normalize("NFKC", text or "").lower():
        if ch in _PUNCT or unicodedata.category(ch).startswith("P"):
            out.append(" ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())


def score(answer: str, instance: Instance) -> bool:
    if instance.gold is None:
        raise Unscorable(f"instance {instance.id} has no gold answer")
    gold = str(instance.gold)
    if instance.choices:
        labels = list(instance.choices)
        gold_label = extract_choice(gold, labels)
        label = extract_choice(answer, labels)
        if gold_label is not None and label is not None:
            return label.lower() == gold_label.lower()
        gold_texts = {normalize_answer(gold)}
        if gold_label is not None:
            gold_texts.add(normalize_answer(instance.choices[gold_label]))
        return normalize_answer(answer) in gold_texts
    return normalize_answer(answer) == normalize_answer(gold)


# -- full-context baseline --------------------------------------------------


def _baseline_messages(query: str, document: str, choices) -> list[dict]:
    req = AnswerRequest(query, document, choices)
    msgs = req.to_messages()
    msgs[0] = {"role": "system", "content": BASELINE_PROMPT}
    return msgs


def run_full_context_baseline(
    instance: Instance,
    max_context: int,
    backend: ChatBackend,
    tokenizer: str | None = None,
) -> EpisodeResult:
    """Single call with the whole (middle-truncated) document in the prompt.

    The document is cut to ``max_context`` minus the prompt overhead, both
    measured with ``tokenizer``.
    """
    started = time.perf_counter()
    tok = tokens.get_tokenizer(tokenizer)
    text = Path(instance.document).read_text(encoding="utf-8")
    overhead = tok.count(ChatRequest(_baseline_messages(instance.query, "", instance.choices)).serialize())
    room = max(max_context - overhead, 0)
    pieces = tok.encode(text)
    document = tok.decode(middle_truncate(pieces, room))
    ledger = CostLedger()
    metered = MeteredBackend(backend, ledger, "baseline", tokenizer)
    response = metered.chat(ChatRequest(_baseline_messages(instance.query, document, instance.choices)))
    answer = (response.text or response.payload()).strip()
    return EpisodeResult(
        answer=answer,
        steps_used=0,
        terminated="single_pass",
        final_state=EpistemicState(),
        trace_ref=None,
        cost_k=episode_cost(ledger),
        wall_ms=round((time.perf_counter() - started) * 1000, 3),
        label=extract_choice(answer, instance.choices) if instance.choices else None,
        trace=Trace(),
        ledger=ledger,
    )


# -- sweeps -----------------------------------------------------------------


@dataclass
class BenchmarkReport:
    per_instance: list[dict] = field(default_factory=list)
    accuracy: float | None = None
    mean_cost_k: float | None = None
    token_eff: float | None = None
    runs: int = 0
    no_data: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def load_instances(path, doc_root=None) -> list[Instance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(Instance.from_dict(json.loads(line), doc_root))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{n}: bad instance record: {exc}") from exc
    return out


def aggregate(records: Iterable[dict], runs: int) -> BenchmarkReport:
    """Accuracy is averaged per run, then over runs; cost over all records."""
    records = list(records)
    report = BenchmarkReport(per_instance=records, runs=runs)
    scored = [r for r in records if r.get("correct") is not None]
    if not records:
        return report
    costs = [r["cost_k"] for r in records]
    report.mean_cost_k = sum(costs) / len(costs)
    if scored:
        per_run = []
        for run in sorted({r["run"] for r in scored}):
            rs = [r for r in scored if r["run"] == run]
            per_run.append(100.0 * sum(1 for r in rs if r["correct"]) / len(rs))
        report.accuracy = sum(per_run) / len(per_run)
        report.no_data = False
        if report.mean_cost_k > 0:
            report.token_eff = token_efficiency(report.accuracy, report.mean_cost_k)
    return report


def run_seed(config: EpisodeConfig, run: int) -> int:
    # seed 0 means greedy and identical runs; a nonzero seed is shifted per run
    return config.seed + run if config.seed else 0


def _episode_record(instance: Instance, run: int, result: EpisodeResult | None, error: str | None, cost_k: float) -> dict:
    rec = {
        "id": instance.id,
        "run": run,
        "answer": result.answer if result else None,
        "label": result.label if result else None,
        "gold": instance.gold,
        "choices": instance.choices,
        "correct": None,
        "cost_k": cost_k,
        "steps": result.steps_used if result else None,
        "terminated": result.terminated if result else "error",
        "trace_ref": result.trace_ref if result else None,
    }
    if error:
        rec["error"] = error
    if instance.gold is not None:
        rec["correct"] = bool(result) and score(result.answer, instance)
    return rec


def run_benchmark(
    instances,
    config: EpisodeConfig,
    runs: int,
    backends: Callable[[Instance, int], Backends],
    parallel: int = 1,
    out_dir=None,
    doc_root=None,
) -> BenchmarkReport:
    """Run every instance ``runs`` times and aggregate the report.

    ``backends`` builds fresh backends for one (instance, run) pair, since
    scripted and mock backends are single-episode. Failures are recorded
    per instance and never stop the sweep.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if isinstance(instances, (str, Path)):
        instances = load_instances(instances, doc_root)
    instances = list(instances)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "trajectories").mkdir(parents=True, exist_ok=True)

    def one(job):
        run, inst = job
        cfg = replace(config, seed=run_seed(config, run))
        env = DocumentEnv(observation_budget=cfg.observation_budget, tokenizer=cfg.tokenizer)
        log = out / "trajectories" / f"{inst.id}.run{run}.jsonl" if out is not None else None
        try:
            result = run_episode(inst, cfg, backends(inst, run), env, log_path=log)
        except EpisodeError as exc:
            logger.warning("instance %s run %d failed: %s", inst.id, run, exc)
            cost = episode_cost(exc.ledger) if exc.ledger is not None else 0.0
            return _episode_record(inst, run, None, str(exc), cost)
        except Exception as exc:  # a broken instance must not sink the sweep
            logger.exception("instance %s run %d crashed", inst.id, run)
            return _episode_record(inst, run, None, f"{type(exc).__name__}: {exc}", 0.0)
        return _episode_record(inst, run, result, None, result.cost_k)

    jobs = [(run, inst) for run in range(runs) for inst in instances]
    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            records = list(pool.map(one, jobs))
    else:
        records = [one(j) for j in jobs]

    report = aggregate(records, runs)
    if out is not None:
        write_results(out / "results.jsonl", records)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
    return report


def write_results(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def rescore(results_path) -> BenchmarkReport:
    """Recompute correctness and the report from a results JSONL file."""
    records = []
    with open(results_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            if r.get("gold") is not None:
                inst = Instance(r["id"], "rescoring", Path("."), r["gold"], r.get("choices"))
                r["correct"] = r.get("answer") is not None and score(r["answer"], inst)
            records.append(r)
    runs = len({r["run"] for r in records}) if records else 0
    return aggregate(records, runs)


__all__ = [
    "BenchmarkReport",
    "aggregate",
    "episode_cost",
    "load_instances",
    "middle_truncate",
    "normalize_answer",
    "rescore",
    "run_benchmark",
    "run_full_context_baseline",
    "score",
    "token_efficiency",
]
