"""Command-line entry point: run, baseline, replay, score, plus fixture generators."""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import tempfile
from dataclasses import fields
from pathlib import Path

from . import golden, synthetic
from .controller import MODES, Backends, EpisodeConfig, run_episode
from .env import DocumentEnv
from .gateway import BackendConfig, HttpChatBackend
from .harness import (
    aggregate,
    load_instances,
    rescore,
    run_benchmark,
    run_full_context_baseline,
    score,
    write_results,
)
from .replay import dumps_summary, replay

log = logging.getLogger("forage")

EPISODE_INTS = {"t_max", "context_budget", "observation_budget", "seed", "window", "policy_retries", "diagnosis_retries"}
BACKEND_INTS = {"timeout_ms", "max_retries"}
BACKEND_FLOATS = {"backoff_base", "backoff_multiplier", "backoff_max"}


def read_config(path) -> dict[str, dict[str, str]]:
    """INI-style file with optional [episode] and [backend] sections."""
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise SystemExit(f"config file not found: {path}")
    return {s: dict(parser[s]) for s in parser.sections()}


def episode_config(args, cfg: dict) -> EpisodeConfig:
    known = {f.name for f in fields(EpisodeConfig)}
    values: dict = {}
    for k, v in cfg.get("episode", {}).items():
        if k not in known:
            raise SystemExit(f"unknown [episode] key: {k}")
        if k in EPISODE_INTS:
            values[k] = int(v)
        elif k == "auxiliary_tools":
            values[k] = v.strip().lower() in ("1", "true", "yes", "on")
        else:
            values[k] = v
    for flag, key in (("mode", "mode"), ("t_max", "t_max"), ("seed", "seed"), ("tokenizer", "tokenizer")):
        if getattr(args, flag, None) is not None:
            values[key] = getattr(args, flag)
    return EpisodeConfig(**values)


def backend_config(args, cfg: dict) -> BackendConfig:
    raw = dict(cfg.get("backend", {}))
    if getattr(args, "backend_endpoint", None):
        raw["endpoint"] = args.backend_endpoint
    if getattr(args, "model", None):
        raw["model"] = args.model
    if getattr(args, "api_key_env", None):
        raw["api_key_env"] = args.api_key_env
    if "endpoint" not in raw or "model" not in raw:
        raise SystemExit("a backend needs --backend-endpoint and --model (or a [backend] config section)")
    kw = {"endpoint": raw.pop("endpoint"), "model": raw.pop("model"), "auth": raw.pop("api_key_env", None)}
    for k, v in raw.items():
        if k in BACKEND_INTS:
            kw[k] = int(v)
        elif k in BACKEND_FLOATS:
            kw[k] = float(v)
        else:
            raise SystemExit(f"unknown [backend] key: {k}")
    return BackendConfig(**kw)


def _backends_factory(args, cfg: dict):
    if args.heuristic:
        return lambda inst, run: synthetic.heuristic_backends()
    bc = backend_config(args, cfg)
    shared = HttpChatBackend(bc, tokenizer=getattr(args, "tokenizer", None))
    return lambda inst, run: Backends.single(shared)


def cmd_run(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    config = episode_config(args, cfg)
    report = run_benchmark(
        args.instances, config, args.runs, _backends_factory(args, cfg),
        parallel=args.parallel, out_dir=args.out, doc_root=args.doc_root,
    )
    print(json.dumps({k: v for k, v in report.to_dict().items() if k != "per_instance"}, indent=2))
    return 0


def cmd_baseline(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    backend = HttpChatBackend(backend_config(args, cfg), tokenizer=args.tokenizer)
    records = []
    for inst in load_instances(args.instances, args.doc_root):
        try:
            r = run_full_context_baseline(inst, args.max_context, backend, args.tokenizer)
        except Exception as exc:  # one bad call must not end the sweep
            log.warning("baseline failed on %s: %s", inst.id, exc)
            records.append({"id": inst.id, "run": 0, "answer": None, "gold": inst.gold, "choices": inst.choices,
                            "correct": False if inst.gold is not None else None, "cost_k": 0.0,
                            "steps": 0, "terminated": "error", "error": str(exc)})
            continue
        records.append({"id": inst.id, "run": 0, "answer": r.answer, "gold": inst.gold, "choices": inst.choices,
                        "correct": score(r.answer, inst) if inst.gold is not None else None,
                        "cost_k": r.cost_k, "steps": 0, "terminated": r.terminated})
    report = aggregate(records, 1)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_results(out / "results.jsonl", records)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    print(json.dumps({k: v for k, v in report.to_dict().items() if k != "per_instance"}, indent=2))
    return 0


def cmd_replay(args) -> int:
    rep = replay(args.trajectory, doc_root=args.doc_root)
    print(dumps_summary(rep))
    return 0 if rep.ok else 1


def cmd_score(args) -> int:
    report = rescore(args.results)
    print(json.dumps({k: v for k, v in report.to_dict().items() if k != "per_instance"}, indent=2))
    return 0


def cmd_demo(args) -> int:
    out = Path(args.out or tempfile.mkdtemp(prefix="forage-demo-"))
    inst = golden.instance(out)
    bk, *_ = golden.backends()
    result = run_episode(inst, EpisodeConfig(), bk, DocumentEnv(), log_path=out / "trajectory.jsonl")
    print(f"document: {inst.document}")
    print(f"trajectory: {result.trace_ref}")
    print(f"steps: {result.steps_used}  terminated: {result.terminated}  cost_k: {result.cost_k:.2f}")
    print(f"answer: {result.answer}")
    return 0


def cmd_needles(args) -> int:
    out = Path(args.out)
    docs = out / "docs"
    with open(out / "instances.jsonl", "w", encoding="utf-8") as fh:
        for nd in synthetic.needles(docs, args.n_tokens, args.count, args.seed):
            rec = nd.instance.to_dict()
            rec["doc_path"] = str(Path(rec["doc_path"]).relative_to(out))
            fh.write(json.dumps(rec) + "\n")
    print(out / "instances.jsonl")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forage", description="Long-document QA by foraging with anchored tools.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def backend_flags(sp):
        sp.add_argument("--backend-endpoint", help="OpenAI-compatible base URL")
        sp.add_argument("--model")
        sp.add_argument("--api-key-env", help="name of the environment variable holding the API key")
        sp.add_argument("--config", help="INI file with [episode] and [backend] sections")

    r = sub.add_parser("run", help="run episodes over a JSONL instance file")
    r.add_argument("--instances", required=True)
    r.add_argument("--doc-root")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--t-max", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--tokenizer")
    r.add_argument("--runs", type=int, default=1)
    r.add_argument("--parallel", type=int, default=1)
    r.add_argument("--out")
    r.add_argument("--heuristic", action="store_true", help="use the rule-based needle backends (no network)")
    backend_flags(r)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("baseline", help="single-call full-context baseline with middle truncation")
    b.add_argument("--instances", required=True)
    b.add_argument("--doc-root")
    b.add_argument("--max-context", type=int, required=True)
    b.add_argument("--tokenizer", help="tokenizer used to measure and cut the document")
    b.add_argument("--out")
    backend_flags(b)
    b.set_defaults(func=cmd_baseline)

    rp = sub.add_parser("replay", help="re-run a trajectory log and compare")
    rp.add_argument("--trajectory", required=True)
    rp.add_argument("--doc-root")
    rp.set_defaults(func=cmd_replay)

    s = sub.add_parser("score", help="recompute the report from a results file")
    s.add_argument("--results", required=True)
    s.set_defaults(func=cmd_score)

    d = sub.add_parser("demo", help="run the built-in 19-step worked example offline")
    d.add_argument("--out")
    d.set_defaults(func=cmd_demo)

    n = sub.add_parser("needles", help="write synthetic needle-in-a-haystack instances")
    n.add_argument("--out", required=True)
    n.add_argument("--n-tokens", type=int, default=10_000)
    n.add_argument("--count", type=int, default=10)
    n.add_argument("--seed", type=int, default=0)
    n.set_defaults(func=cmd_needles)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.command == "needles":
        Path(args.out).mkdir(parents=True, exist_ok=True)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
