"""Batch command-line front end: mine, learn, eval, replay.

Every run writes a manifest with the resolved configuration, input digests
and stage wall times; `replay MANIFEST` reruns the recorded command and
reproduces the theory/metrics files byte-identically.

Exit codes: 0 ok, 2 configuration error, 3 I/O or data error, 4 internal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import __version__
from .data import (
    FormatConfig,
    build_data_graph,
    load_facts,
    parse_rewrite_spec,
    rewrite_categoricals,
)
from .errors import (
    ArityConflictError,
    ConfigError,
    DataError,
    ParseError,
    RuleMineError,
)
from .evaluation import EvalConfig, evaluate, read_test_facts
from .learner import (
    LearnerConfig,
    learn,
    load_theory_pairs,
    theory_lines,
    write_theory,
)
from .mining import MinerConfig, mine_patterns, recursion_bound


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("RULEMINE_THREADS", "1")))
    except ValueError:
        return 1


def _write_manifest(out_dir: str, command: str, args: argparse.Namespace,
                    inputs: list[str], outputs: list[str],
                    stage_times: dict[str, float]) -> str:
    payload = {
        "command": command,
        "args": {k: v for k, v in vars(args).items() if k not in ("func", "command")},
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": outputs,
        "versions": {"rulemine": __version__, "python": sys.version.split()[0]},
        "stage_times_s": {k: round(v, 6) for k, v in stage_times.items()},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_train(args: argparse.Namespace):
    db = load_facts(args.train, FormatConfig(layout=args.layout))
    if db.n_facts == 0:
        raise DataError(f"no facts parsed from {args.train}")
    mapping = []
    if getattr(args, "rewrite_spec", None):
        with open(args.rewrite_spec, "r", encoding="utf-8") as fh:
            spec = parse_rewrite_spec(fh)
        db, mapping = rewrite_categoricals(db, spec)
    return db, mapping


def _resolve_m(args: argparse.Namespace, n_relations: int) -> int:
    if args.m is not None and args.m_per_relation is not None:
        raise ConfigError("--m and --m-per-relation are mutually exclusive")
    if args.m_per_relation is not None:
        if args.m_per_relation < 1:
            raise ConfigError("--m-per-relation must be >= 1")
        return args.m_per_relation * n_relations
    return args.m if args.m is not None else 30


def cmd_learn(args: argparse.Namespace) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    times: dict[str, float] = {}
    t0 = time.perf_counter()
    db, mapping = _load_train(args)
    times["load"] = time.perf_counter() - t0

    cfg = LearnerConfig(
        m=_resolve_m(args, db.n_predicates),
        epsilon=args.epsilon,
        depth=args.depth,
        paths=args.paths,
        seed=args.seed,
        symmetry_mode=args.symmetry_mode,
        budget_mode=args.budget_mode,
        threads=args.threads,
    )
    t0 = time.perf_counter()
    theory = learn(db, cfg)
    times["learn"] = time.perf_counter() - t0

    outputs = []
    theory_path = os.path.join(args.out_dir, "theory.tsv")
    write_theory(theory, theory_path)
    outputs.append(theory_path)
    if mapping:
        map_path = os.path.join(args.out_dir, "rewrite_map.tsv")
        with open(map_path, "w", encoding="utf-8") as fh:
            for orig, cat, derived in mapping:
                fh.write(f"{orig}\t{cat}\t{derived}\n")
        outputs.append(map_path)

    report = {
        "config": {
            "m": cfg.m, "epsilon": cfg.epsilon, "depth": cfg.depth,
            "paths": cfg.paths, "seed": cfg.seed,
            "symmetry_mode": cfg.symmetry_mode, "budget_mode": cfg.budget_mode,
            "threads": cfg.threads,
        },
        "data": {
            "n_nodes": theory.meta["n_nodes"],
            "n_facts": theory.meta["n_facts"],
            "n_unary_facts": theory.meta["n_unary_facts"],
            "n_binary_facts": theory.meta["n_binary_facts"],
        },
        "paths_budget": theory.meta["paths_budget"],
        "store_patterns": theory.meta["store_patterns"],
        "store_groundings": theory.meta["store_groundings"],
        "candidates": theory.meta["candidates"],
        "rules": len(theory),
        "stage_times_s": {k: round(v, 6) for k, v in times.items()},
    }
    report_path = os.path.join(args.out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(report_path)

    inputs = [args.train] + ([args.rewrite_spec] if args.rewrite_spec else [])
    outputs.append(_write_manifest(args.out_dir, "learn", args, inputs, outputs, times))
    print(f"learned {len(theory)} rules from {theory.meta['candidates']} candidates "
          f"(budget N={theory.meta['paths_budget']}) -> {theory_path}")
    return 0


def cmd_mine(args: argparse.Namespace) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    times: dict[str, float] = {}
    t0 = time.perf_counter()
    db, _ = _load_train(args)
    graph = build_data_graph(db)
    times["load"] = time.perf_counter() - t0

    cfg = MinerConfig(depth=args.depth, paths=args.paths, seed=args.seed,
                      threads=args.threads)
    t0 = time.perf_counter()
    store = mine_patterns(graph, cfg)
    times["mine"] = time.perf_counter() - t0
    bound = recursion_bound(graph, cfg)

    dump_path = os.path.join(args.out_dir, "store.tsv")
    with open(dump_path, "w", encoding="utf-8") as fh:
        for line in store.dump_lines():
            fh.write(line + "\n")
    outputs = [dump_path]
    outputs.append(_write_manifest(args.out_dir, "mine", args, [args.train], outputs, times))
    print(f"mined {len(store)} patterns, {store.total_groundings} ground patterns "
          f"-> {dump_path}")
    print(f"recursion bound {bound}, measured recursive calls "
          f"{store.stats.recursive_calls}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    times: dict[str, float] = {}
    t0 = time.perf_counter()
    db, _ = _load_train(args)
    graph = build_data_graph(db)
    pairs = load_theory_pairs(args.theory, db)
    fmt = FormatConfig(layout=args.layout)
    with open(args.test, "r", encoding="utf-8") as fh:
        test_facts = read_test_facts(fh, db, fmt)
    times["load"] = time.perf_counter() - t0

    hits_at = tuple(sorted({int(k) for k in args.hits.split(",") if k.strip()}))
    if not hits_at or any(k < 1 for k in hits_at):
        raise ConfigError(f"invalid --hits list {args.hits!r}")
    cfg = EvalConfig(
        hits_at=hits_at,
        direction=args.direction,
        filtered=not args.no_filter,
        candidate_scope=args.candidate_scope,
    )
    debug_rows: list | None = [] if args.debug_tsv else None
    t0 = time.perf_counter()
    metrics = evaluate(test_facts, pairs, graph, cfg, debug_rows)
    times["evaluate"] = time.perf_counter() - t0

    metrics_path = os.path.join(args.out_dir, "metrics.json")
    stable = {
        "mrr": metrics["mrr"],
        "hits": {str(k): v for k, v in metrics["hits"].items()},
        "n_queries": metrics["n_queries"],
    }
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(stable, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs = [metrics_path]
    if args.debug_tsv:
        with open(args.debug_tsv, "w", encoding="utf-8") as fh:
            for row in debug_rows or []:
                fh.write(row + "\n")
        outputs.append(args.debug_tsv)
    inputs = [args.train, args.test, args.theory]
    outputs.append(_write_manifest(args.out_dir, "eval", args, inputs, outputs, times))
    print(json.dumps({**stable, "wall_time_s": round(times["evaluate"], 6)}, sort_keys=True))
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    command = manifest.get("command")
    handlers = {"learn": cmd_learn, "mine": cmd_mine, "eval": cmd_eval}
    if command not in handlers:
        raise ConfigError(f"manifest names unknown command {command!r}")
    ns = argparse.Namespace(**manifest["args"])
    return handlers[command](ns)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulemine",
        description="Learn ranked Datalog theories from relational fact files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--train", required=True, help="training facts (TSV)")
        p.add_argument("--layout", choices=("sro", "rso"), default="sro",
                       help="field order of fact lines (default: subject relation object)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help="worker count (env RULEMINE_THREADS overrides the default)")
        p.add_argument("--out-dir", default=".", help="directory for output files")

    p_learn = sub.add_parser("learn", help="mine patterns and learn a ranked theory")
    common(p_learn)
    p_learn.add_argument("--m", type=int, default=None, help="max theory size (default 30)")
    p_learn.add_argument("--m-per-relation", type=int, default=None,
                         help="set M to this many rules per relation")
    p_learn.add_argument("--epsilon", type=float, default=0.1,
                         help="count-uncertainty target (default 0.1; use 0.01 for KGC)")
    p_learn.add_argument("--depth", type=int, default=3)
    p_learn.add_argument("--paths", type=int, default=None,
                         help="override the per-node path budget N")
    p_learn.add_argument("--symmetry-mode", choices=("unordered", "ordered"),
                         default="unordered")
    p_learn.add_argument("--budget-mode", choices=("practical", "worst_case"),
                         default="practical")
    p_learn.add_argument("--rewrite-spec", default=None,
                         help="categorical rewrite spec file (predicate=subject|object lines)")
    p_learn.set_defaults(func=cmd_learn)

    p_mine = sub.add_parser("mine", help="mine ground patterns and dump the store")
    common(p_mine)
    p_mine.add_argument("--depth", type=int, default=3)
    p_mine.add_argument("--paths", type=int, default=8)
    p_mine.add_argument("--rewrite-spec", default=None)
    p_mine.set_defaults(func=cmd_mine)

    p_eval = sub.add_parser("eval", help="knowledge-graph completion metrics")
    common(p_eval)
    p_eval.add_argument("--theory", required=True, help="theory TSV from learn")
    p_eval.add_argument("--test", required=True, help="test facts (TSV)")
    p_eval.add_argument("--hits", default="1,3,10", help="comma list of Hit@K cutoffs")
    p_eval.add_argument("--direction", choices=("tail", "head", "both"), default="both")
    p_eval.add_argument("--no-filter", action="store_true",
                        help="rank against all candidates, keeping known true facts")
    p_eval.add_argument("--candidate-scope", choices=("position", "predicate", "all"),
                        default="position")
    p_eval.add_argument("--debug-tsv", default=None,
                        help="write per-query ranks and top entities here")
    p_eval.add_argument("--rewrite-spec", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_replay = sub.add_parser("replay", help="rerun a recorded manifest")
    p_replay.add_argument("manifest")
    p_replay.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ArityConflictError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RuleMineError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
