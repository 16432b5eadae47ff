"""Budgeted parallel mining of recurrent ground patterns in the data graph.

From every node the miner runs bounded walks that graft at most one unary
fact and one previously untraversed binary fact per step, recording every
intermediate grafted graph.  The per-source path budget splits across the
selected binary edges with ceiling division; when more edges are available
than budget, a per-source seeded RNG samples the continuations, so results
are independent of worker scheduling.  Ground patterns are deduplicated
globally as sorted fact-id sets and grouped under canonical pattern keys.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .data import DataGraph
from .errors import ConfigError, SizeGuardError
from .patterns import (
    DEFAULT_NODE_CAP,
    Pattern,
    canonicalize_atoms,
    pattern_of,
    pattern_text,
    unordered_key,
)

GroundPattern = tuple[int, ...]

_MASK64 = (1 << 64) - 1


def _mix_seed(seed: int, node: int) -> int:
    """splitmix64-style mixing of the global seed with a source node id."""
    z = (seed + (node + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass
class MinerConfig:
    depth: int = 3
    paths: int = 8
    seed: int = 0
    node_cap: int = DEFAULT_NODE_CAP
    threads: int = 1

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ConfigError(f"depth must be >= 0, got {self.depth}")
        if self.paths < 1:
            raise ConfigError(f"paths budget must be >= 1, got {self.paths}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.node_cap < 2:
            raise ConfigError(f"node cap must be >= 2, got {self.node_cap}")


@dataclass
class MinerStats:
    """Counters filled while mining; used by tests and the CLI report."""

    invocations: int = 0        # walk steps processed, sources included
    recursive_calls: int = 0    # walk steps at depth >= 1
    random_selections: int = 0  # times the budget forced random edge sampling

    def merge(self, other: "MinerStats") -> None:
        self.invocations += other.invocations
        self.recursive_calls += other.recursive_calls
        self.random_selections += other.random_selections


class StoreEntry:
    __slots__ = ("pattern", "key", "ukey", "groundings")

    def __init__(self, pattern: Pattern, key: bytes, ukey: bytes):
        self.pattern = pattern
        self.key = key
        self.ukey = ukey
        self.groundings: set[GroundPattern] = set()

    @property
    def count(self) -> int:
        return len(self.groundings)


class PatternStore:
    """Map from canonical pattern keys to deduplicated ground-pattern sets.

    Ground patterns are sorted fact-id tuples; a fact set determines its
    pattern, so deduplication is global.  A secondary index groups keys that
    coincide once edge orientation is ignored.
    """

    def __init__(self, graph: DataGraph, node_cap: int = DEFAULT_NODE_CAP):
        self.graph = graph
        self.db = graph.db
        self.node_cap = node_cap
        self.entries: dict[bytes, StoreEntry] = {}
        self.orientation_classes: dict[bytes, list[bytes]] = {}
        self._seen: set[GroundPattern] = set()
        self.stats = MinerStats()

    def add_graph(self, graph_tuple: GroundPattern) -> bool:
        """Record one ground pattern; returns False if already present."""
        if graph_tuple in self._seen:
            return False
        self._seen.add(graph_tuple)
        atoms, nodes = pattern_of(self.db, graph_tuple)
        canon_atoms, key, _ = canonicalize_atoms(atoms, len(nodes), self.node_cap)
        entry = self.entries.get(key)
        if entry is None:
            ukey = unordered_key(canon_atoms, len(nodes), self.node_cap)
            entry = StoreEntry(Pattern(len(nodes), canon_atoms), key, ukey)
            self.entries[key] = entry
            self.orientation_classes.setdefault(ukey, []).append(key)
        entry.groundings.add(graph_tuple)
        return True

    def get(self, key: bytes) -> StoreEntry | None:
        return self.entries.get(key)

    def count(self, key: bytes) -> int:
        entry = self.entries.get(key)
        return entry.count if entry else 0

    def count_unordered(self, ukey: bytes) -> int:
        return sum(self.entries[k].count for k in self.orientation_classes.get(ukey, ()))

    def sorted_keys(self) -> list[bytes]:
        return sorted(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_groundings(self) -> int:
        return len(self._seen)

    def absorb(self, other: "PatternStore") -> None:
        """Set-union merge of a worker-private store; order independent."""
        for key, entry in other.entries.items():
            mine = self.entries.get(key)
            if mine is None:
                mine = StoreEntry(entry.pattern, entry.key, entry.ukey)
                self.entries[key] = mine
                self.orientation_classes.setdefault(entry.ukey, []).append(key)
            mine.groundings |= entry.groundings
        self._seen |= other._seen
        self.stats.merge(other.stats)

    def dump_lines(self) -> list[str]:
        """One line per pattern: `text TAB count`, count desc then text."""
        rows = []
        for key in self.sorted_keys():
            entry = self.entries[key]
            rows.append((-entry.count, pattern_text(entry.pattern, self.db, self.node_cap)))
        rows.sort()
        return [f"{text}\t{-negcount}" for negcount, text in rows]


def double_unary_patterns(v: int, graph: DataGraph) -> set[GroundPattern]:
    """All unordered pairs of distinct unary facts on node v."""
    us = graph.unaries(v)
    out: set[GroundPattern] = set()
    for i in range(len(us)):
        for j in range(i + 1, len(us)):
            out.add((us[i], us[j]))
    return out


def _mine_source(graph: DataGraph, v0: int, cfg: MinerConfig, store: PatternStore) -> None:
    """Run the budgeted walk exploration from one source node."""
    stats = store.stats
    facts = graph.db.facts
    rng = random.Random(_mix_seed(cfg.seed, v0))

    for pair in sorted(double_unary_patterns(v0, graph)):
        store.add_graph(pair)

    empty: frozenset[int] = frozenset()
    # work item: (node, depth, budget, grown graphs, traversed binary edges)
    stack: list[tuple[int, int, int, tuple[frozenset[int], ...], frozenset[int]]] = [
        (v0, 0, cfg.paths, (empty,), empty)
    ]
    while stack:
        v, d, budget, pats, prev = stack.pop()
        stats.invocations += 1
        if d > 0:
            stats.recursive_calls += 1

        # graft at most one unary of v onto each grown graph
        seen = set(pats)
        new_graphs: list[frozenset[int]] = []
        for u in graph.unaries(v):
            for g in pats:
                ng = g.union((u,))
                if ng not in seen:
                    seen.add(ng)
                    new_graphs.append(ng)
                    store.add_graph(tuple(sorted(ng)))
        if d >= cfg.depth:
            continue
        extended = list(pats) + new_graphs

        avail = [e for e in graph.binaries(v) if e not in prev]
        if not avail:
            continue
        if budget < len(avail):
            sel = sorted(rng.sample(avail, budget))
            child_budget = 1
            stats.random_selections += 1
        else:
            sel = avail
            child_budget = -(-budget // len(avail))
        for e in reversed(sel):
            _, args = facts[e]
            w = args[1] if args[0] == v else args[0]
            children = tuple(g.union((e,)) for g in extended)
            for cg in children:
                store.add_graph(tuple(sorted(cg)))
            stack.append((w, d + 1, child_budget, children, prev.union((e,))))


def mine_patterns(graph: DataGraph, cfg: MinerConfig) -> PatternStore:
    """Mine ground patterns from every node of the graph.

    The result is deterministic for a fixed (graph, cfg) and independent of
    the worker count: sources are partitioned across workers mining into
    private stores that are merged by set union.
    """
    n = graph.n_nodes
    if cfg.threads == 1 or n < 2 * cfg.threads:
        store = PatternStore(graph, cfg.node_cap)
        for v in range(n):
            _mine_source(graph, v, cfg, store)
        return store

    bounds = [(i * n) // cfg.threads for i in range(cfg.threads + 1)]

    def work(lo: int, hi: int) -> PatternStore:
        part = PatternStore(graph, cfg.node_cap)
        for v in range(lo, hi):
            _mine_source(graph, v, cfg, part)
        return part

    merged = PatternStore(graph, cfg.node_cap)
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(work, bounds[i], bounds[i + 1]) for i in range(cfg.threads)]
        for fut in futures:
            merged.absorb(fut.result())
    return merged


BRUTE_FORCE_FACT_LIMIT = 500


def brute_force_enumerate(graph: DataGraph, depth: int,
                          node_cap: int = DEFAULT_NODE_CAP) -> PatternStore:
    """Exhaustively enumerate every ground pattern reachable by the walk
    grammar (at most one unary plus one new binary per step, plus two-unary
    pairs) with no path budget.  Oracle for completeness testing; guarded to
    small graphs.
    """
    if graph.db.n_facts > BRUTE_FORCE_FACT_LIMIT:
        raise SizeGuardError(
            f"exhaustive enumeration limited to {BRUTE_FORCE_FACT_LIMIT} facts, "
            f"got {graph.db.n_facts}"
        )
    store = PatternStore(graph, node_cap)
    for v0 in range(graph.n_nodes):
        for pair in double_unary_patterns(v0, graph):
            store.add_graph(pair)
        _bf_step(graph, v0, depth, 0, [frozenset()], frozenset(), store)
    return store


def _bf_step(graph: DataGraph, v: int, depth: int, d: int,
             pats: list[frozenset[int]], prev: frozenset[int], store: PatternStore) -> None:
    extended = list(pats)
    seen = set(pats)
    for u in graph.unaries(v):
        for g in pats:
            ng = g.union((u,))
            if ng not in seen:
                seen.add(ng)
                extended.append(ng)
                store.add_graph(tuple(sorted(ng)))
    if d >= depth:
        return
    for e in graph.binaries(v):
        if e in prev:
            continue
        _, args = graph.db.facts[e]
        w = args[1] if args[0] == v else args[0]
        children = [g.union((e,)) for g in extended]
        for cg in children:
            store.add_graph(tuple(sorted(cg)))
        _bf_step(graph, w, depth, d + 1, children, prev.union((e,)), store)


def recursion_bound(graph: DataGraph, cfg: MinerConfig) -> int:
    """Upper bound on recursive walk steps: per source node, the smaller of
    the full non-backtracking expansion size and budget * depth, summed.

    The expansion term counts the source's binary degree plus, for every
    non-backtracking edge walk of length i < depth arriving at a node u,
    that node's binary degree minus one.
    """
    D, N = cfg.depth, cfg.paths
    total = 0
    facts = graph.db.facts
    for v in range(graph.n_nodes):
        left = graph.binary_degree(v)
        if D >= 2 and left:
            level: dict[tuple[int, int], int] = {}
            for e in graph.binaries(v):
                _, args = facts[e]
                w = args[1] if args[0] == v else args[0]
                level[(w, e)] = level.get((w, e), 0) + 1
            for i in range(1, D):
                for (u, _), c in level.items():
                    left += c * (graph.binary_degree(u) - 1)
                if i == D - 1:
                    break
                nxt: dict[tuple[int, int], int] = {}
                for (u, e), c in level.items():
                    for f in graph.binaries(u):
                        if f == e:
                            continue
                        _, args = facts[f]
                        w = args[1] if args[0] == u else args[0]
                        nxt[(w, f)] = nxt.get((w, f), 0) + c
                level = nxt
        total += min(left, N * D)
    return total
