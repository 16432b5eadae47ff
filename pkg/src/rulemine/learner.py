"""End-to-end theory learning: path-budget computation, candidate rule
generation and filtering, top-M selection by individual utility, and greedy
ordering by contributed theory utility."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .data import Database, build_data_graph
from .errors import ConfigError, DataError, ParseError, UndefinedPrecisionError
from .mining import MinerConfig, PatternStore, mine_patterns
from .patterns import DEFAULT_NODE_CAP, Rule, enumerate_rules, parse_rule_text, symmetry_factor
from .utility import (
    EXPONENT_MODES,
    SYMMETRY_MODES,
    RuleStats,
    TheoryAggregate,
    batch_recall_degrees,
    bayesian_prior,
    passes_prior_filter,
    pattern_counts,
    precision,
    recall_value,
    theory_utility,
)

EULER_GAMMA = 0.5772156649015329

BUDGET_MODES = ("practical", "worst_case")


@dataclass
class LearnerConfig:
    m: int = 30
    epsilon: float = 0.1
    depth: int = 3
    paths: int | None = None          # explicit budget override
    seed: int = 0
    symmetry_mode: str = "unordered"
    budget_mode: str = "practical"
    exponent_mode: str = "group"
    threads: int = 1
    node_cap: int = DEFAULT_NODE_CAP
    pattern_space_estimate: int | None = None

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ConfigError(f"theory size m must be >= 1, got {self.m}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.paths is not None and self.paths < 1:
            raise ConfigError(f"paths budget must be >= 1, got {self.paths}")
        if self.symmetry_mode not in SYMMETRY_MODES:
            raise ConfigError(f"unknown symmetry mode {self.symmetry_mode!r}")
        if self.budget_mode not in BUDGET_MODES:
            raise ConfigError(f"unknown budget mode {self.budget_mode!r}")
        if self.exponent_mode not in EXPONENT_MODES:
            raise ConfigError(f"unknown exponent mode {self.exponent_mode!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")


def _harmonic(n: int) -> float:
    """Partial harmonic sum 1 + 1/2 + ... + 1/n."""
    if n <= 0:
        return 0.0
    if n > 5_000_000:
        # asymptotic expansion; error is far below float precision here
        return math.log(n) + EULER_GAMMA + 1.0 / (2 * n) - 1.0 / (12 * n * n)
    total = 0.0
    for m in range(1, n + 1):
        total += 1.0 / m
    return total


def compute_paths_budget(cfg: LearnerConfig, n_nodes: int,
                         pattern_space_estimate: int | None = None) -> int:
    """Per-source path budget for mining.

    practical: ceil(m * depth / (n_nodes * eps^2)), floored at 1; suits data
    where node degrees are roughly uniform.  worst_case: the distribution-
    free bound ceil(9 * m * H(P) / eps^2), with H the harmonic sum over the
    pattern-space size estimate P.
    """
    if n_nodes < 1:
        raise ConfigError("budget computation needs at least one node")
    eps2 = Fraction(str(cfg.epsilon)) ** 2
    if cfg.budget_mode == "practical":
        return max(1, math.ceil(Fraction(cfg.m * cfg.depth) / (n_nodes * eps2)))
    est = pattern_space_estimate if pattern_space_estimate is not None \
        else cfg.pattern_space_estimate
    if est is None or est < 1:
        raise ConfigError(
            "worst_case budget mode needs a pattern-space estimate "
            "(supply one or let learn() run a pilot mining pass)"
        )
    return max(1, math.ceil(9 * cfg.m * _harmonic(est) / float(eps2)))


@dataclass
class Candidate:
    rule: Rule
    stats: RuleStats


def generate_candidates(store: PatternStore, db: Database,
                        cfg: LearnerConfig) -> list[Candidate]:
    """Enumerate restricted rules over every stored pattern and keep those
    whose corrected precision beats random guessing.

    Rules whose body pattern has no stored groundings are discarded; full
    stats (including recall-degree maps) are computed only for survivors.
    """
    out: list[Candidate] = []
    for key in store.sorted_keys():
        entry = store.entries[key]
        if entry.pattern.length < 2:
            continue
        rules = enumerate_rules(entry.pattern, db, cfg.node_cap)
        if not rules:
            continue
        kept: list[tuple[Rule, Fraction, int, Fraction]] = []
        for rule in rules:
            try:
                prec = precision(rule, store, cfg.symmetry_mode)
            except UndefinedPrecisionError:
                continue
            sym = symmetry_factor(rule, cfg.symmetry_mode)
            try:
                prior = bayesian_prior(rule, db)
            except DataError:
                continue
            if passes_prior_filter(prec, sym, prior):
                kept.append((rule, prec, sym, prior))
        if not kept:
            continue
        degree_maps = batch_recall_degrees([r for r, _, _, _ in kept], store)
        for (rule, prec, sym, prior), degrees in zip(kept, degree_maps):
            rule_count, body_count = pattern_counts(rule, store, cfg.symmetry_mode)
            out.append(Candidate(rule, RuleStats(
                precision=prec,
                symmetry=sym,
                prior=prior,
                recall=recall_value(degrees),
                degrees=degrees,
                length=rule.length,
                rule_count=rule_count,
                body_count=body_count,
            )))
    return out


def choose_top_m(cands: Sequence[Candidate], m: int) -> list[Candidate]:
    """Best m candidates by individual utility; ties fall back to higher
    precision, then rule text."""
    ranked = sorted(
        cands,
        key=lambda c: (-c.stats.utility, -c.stats.precision, c.rule.text),
    )
    return ranked[:m]


@dataclass
class TheoryEntry:
    rank: int
    rule: Rule
    stats: RuleStats
    weight: float
    cumulative_utility: float


@dataclass
class Theory:
    """Rules in greedy selection order with per-step cumulative utility."""

    entries: list[TheoryEntry]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def rule_texts(self) -> list[str]:
        return [e.rule.text for e in self.entries]

    def pairs(self) -> list[tuple[Rule, float]]:
        return [(e.rule, e.weight) for e in self.entries]


def greedy_order(cands: Sequence[Candidate], exponent_mode: str = "group") -> Theory:
    """Order candidates by contributed theory utility.

    Each step appends the candidate maximizing the utility of the extended
    theory; ties break on individual utility, then rule text.  Rule weights
    are the precisions.
    """
    remaining = list(cands)
    agg = TheoryAggregate(exponent_mode)
    entries: list[TheoryEntry] = []
    while remaining:
        best_i = 0
        best_key = None
        for i, cand in enumerate(remaining):
            score = agg.score_with(cand.rule, cand.stats)
            key = (-score, -cand.stats.utility, cand.rule.text)
            if best_key is None or key < best_key:
                best_key = key
                best_i = i
        cand = remaining.pop(best_i)
        agg.add(cand.rule, cand.stats)
        entries.append(TheoryEntry(
            rank=len(entries) + 1,
            rule=cand.rule,
            stats=cand.stats,
            weight=float(cand.stats.precision),
            cumulative_utility=agg.utility(),
        ))
    return Theory(entries)


def learn(db: Database, cfg: LearnerConfig) -> Theory:
    """Full pipeline: build graph, compute budget, mine, filter, rank, order.

    Deterministic for a fixed seed and independent of thread count.  An
    empty candidate set yields an empty theory.
    """
    if db.n_facts == 0:
        raise DataError("no facts parsed")
    graph = build_data_graph(db)
    if cfg.paths is not None:
        budget = cfg.paths
    else:
        estimate = cfg.pattern_space_estimate
        if cfg.budget_mode == "worst_case" and estimate is None:
            pilot = mine_patterns(graph, MinerConfig(
                depth=cfg.depth, paths=8, seed=cfg.seed,
                node_cap=cfg.node_cap, threads=cfg.threads,
            ))
            estimate = len(pilot)
        budget = compute_paths_budget(cfg, graph.n_nodes, estimate)
    store = mine_patterns(graph, MinerConfig(
        depth=cfg.depth, paths=budget, seed=cfg.seed,
        node_cap=cfg.node_cap, threads=cfg.threads,
    ))
    cands = generate_candidates(store, db, cfg)
    top = choose_top_m(cands, cfg.m)
    theory = greedy_order(top, cfg.exponent_mode)
    theory.meta = {
        "n_nodes": graph.n_nodes,
        "n_facts": db.n_facts,
        "n_unary_facts": graph.n_unary,
        "n_binary_facts": graph.n_binary,
        "paths_budget": budget,
        "store_patterns": len(store),
        "store_groundings": store.total_groundings,
        "candidates": len(cands),
        "miner_invocations": store.stats.invocations,
        "miner_recursive_calls": store.stats.recursive_calls,
        "miner_random_selections": store.stats.random_selections,
    }
    return theory


# ---------------------------------------------------------------------------
# Theory file I/O

_COLUMNS = ("rank", "rule", "weight", "precision", "symmetry", "prior",
            "recall", "complexity", "utility", "cumulative_utility")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def theory_lines(theory: Theory) -> list[str]:
    lines = ["# " + "\t".join(_COLUMNS)]
    for e in theory.entries:
        s = e.stats
        lines.append("\t".join((
            str(e.rank),
            e.rule.text,
            _fmt(e.weight),
            _fmt(float(s.precision)),
            str(s.symmetry),
            _fmt(float(s.prior)),
            _fmt(s.recall),
            _fmt(s.complexity),
            _fmt(s.utility),
            _fmt(e.cumulative_utility),
        )))
    return lines


def write_theory(theory: Theory, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in theory_lines(theory):
            fh.write(line + "\n")


def read_theory_pairs(stream: Iterable[str], db: Database) -> list[tuple[Rule, float]]:
    """Load (rule, weight) pairs from a theory TSV for evaluation."""
    pairs: list[tuple[Rule, float]] = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise ParseError("theory line needs rank, rule and weight", line=lineno)
        rule = parse_rule_text(fields[1], db)
        pairs.append((rule, float(fields[2])))
    return pairs


def load_theory_pairs(path: str, db: Database) -> list[tuple[Rule, float]]:
    with open(path, "r", encoding="utf-8") as fh:
        return read_theory_pairs(fh, db)
