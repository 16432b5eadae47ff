"""Rule scoring: precision, symmetry and prior corrections, recall,
complexity penalty, and their composition into rule and theory utility.

Counts are exact integers taken from the pattern store; ratios stay rational
until the final float conversion so that small fixtures reproduce exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .data import Database
from .errors import DataError, UndefinedPrecisionError
from .mining import PatternStore, StoreEntry
from .patterns import (
    DEFAULT_NODE_CAP,
    Rule,
    automorphisms,
    canonicalize_atoms,
    pattern_of,
    symmetry_factor,
    unordered_key,
)

SYMMETRY_MODES = ("unordered", "ordered")


class _RuleView:
    """Canonical keys of a rule's full pattern and body pattern, plus the
    head atom's position in the canonical atom order."""

    __slots__ = ("key", "ukey", "body_key", "body_ukey", "head_pos")

    def __init__(self, rule: Rule, node_cap: int = DEFAULT_NODE_CAP):
        pattern = rule.pattern
        canon_atoms, self.key, perm = canonicalize_atoms(
            pattern.atoms, pattern.var_count, node_cap
        )
        self.ukey = unordered_key(canon_atoms, pattern.var_count, node_cap)
        hp, hs = rule.head_atom
        head_canon = (hp, tuple(perm[s] for s in hs))
        self.head_pos = canon_atoms.index(head_canon)
        body = rule.body_pattern()
        body_canon, self.body_key, _ = canonicalize_atoms(
            body.atoms, body.var_count, node_cap
        )
        self.body_ukey = unordered_key(body_canon, body.var_count, node_cap)


def pattern_counts(rule: Rule, store: PatternStore, mode: str = "unordered") -> tuple[int, int]:
    """Stored grounding counts of a rule's full pattern and body pattern."""
    view = _RuleView(rule, store.node_cap)
    if mode == "ordered":
        return store.count(view.key), store.count(view.body_key)
    return store.count_unordered(view.ukey), store.count_unordered(view.body_ukey)


def precision(rule: Rule, store: PatternStore, mode: str = "unordered") -> Fraction:
    """Ratio of rule-pattern groundings to body-pattern groundings.

    In "unordered" mode counts aggregate over edge-orientation variants of
    the pattern; "ordered" counts the endpoint-ordered pattern only.
    """
    if mode not in SYMMETRY_MODES:
        raise ValueError(f"unknown symmetry mode {mode!r}")
    rule_count, body_count = pattern_counts(rule, store, mode)
    if body_count == 0:
        raise UndefinedPrecisionError(
            f"body of {rule.text!r} has no stored groundings"
        )
    return Fraction(rule_count, body_count)


def bayesian_prior(rule: Rule, db: Database) -> Fraction:
    """Base rate of the head predicate among all predicates that could fill
    the head slot with the same arity and variable shape.

    Repeated-variable heads p(X, X) are matched only against the
    repeated-variable groundings of other binary predicates.
    """
    pid, slots = rule.head_atom
    if len(slots) == 1:
        num = db.pred_count(pid)
        den = sum(db.pred_count(q) for q in range(db.n_predicates) if db.pred_arity[q] == 1)
    elif slots[0] == slots[1]:
        num = db.loop_counts[pid]
        den = sum(db.loop_counts[q] for q in range(db.n_predicates) if db.pred_arity[q] == 2)
    else:
        num = db.pred_count(pid)
        den = sum(db.pred_count(q) for q in range(db.n_predicates) if db.pred_arity[q] == 2)
    if num == 0:
        raise DataError(
            f"head predicate of {rule.text!r} has no facts of the head's shape"
        )
    return Fraction(num, den)


def corrected_precision(prec: Fraction, symmetry: int, prior: Fraction) -> Fraction:
    return prec * symmetry / prior


def passes_prior_filter(prec: Fraction, symmetry: int, prior: Fraction) -> bool:
    """A useful rule must beat random guessing: precision * symmetry / prior > 1."""
    return corrected_precision(prec, symmetry, prior) > 1


def _iso_fact_rows(entry: StoreEntry, grounding: tuple[int, ...],
                   db: Database, node_cap: int) -> list[tuple[int, ...]]:
    """All order-preserving isomorphisms from the canonical pattern onto one
    ground pattern, each given as the per-atom tuple of image fact ids."""
    atoms, nodes = pattern_of(db, grounding)
    _, _, perm = canonicalize_atoms(atoms, len(nodes), node_cap)
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    base = [nodes[inv[s]] for s in range(len(nodes))]
    rows = []
    fact_ids = db.fact_ids
    for auto in automorphisms(entry.pattern.atoms, entry.pattern.var_count):
        assign = [base[auto[s]] for s in range(len(base))]
        rows.append(tuple(
            fact_ids[(p, tuple(assign[s] for s in slots))]
            for p, slots in entry.pattern.atoms
        ))
    return rows


def recall_degrees(rule: Rule, store: PatternStore) -> dict[int, int]:
    """Per head-fact counts of distinct rule-pattern groundings entailing it.

    A ground pattern counts once toward each distinct head-image fact over
    its order-preserving isomorphisms from the rule pattern.
    """
    return batch_recall_degrees([rule], store)[0]


def batch_recall_degrees(rules: Sequence[Rule],
                         store: PatternStore) -> list[dict[int, int]]:
    """Recall-degree maps for several rules sharing one rule pattern,
    enumerating each ground pattern's isomorphisms only once."""
    if not rules:
        return []
    views = [_RuleView(r, store.node_cap) for r in rules]
    key = views[0].key
    if any(v.key != key for v in views):
        raise ValueError("batch_recall_degrees requires rules over one pattern")
    entry = store.get(key)
    degrees: list[dict[int, int]] = [dict() for _ in rules]
    if entry is None:
        return degrees
    head_positions = [v.head_pos for v in views]
    db = store.db
    for g in entry.groundings:
        rows = _iso_fact_rows(entry, g, db, store.node_cap)
        for i, hp in enumerate(head_positions):
            deg = degrees[i]
            for f in {row[hp] for row in rows}:
                deg[f] = deg.get(f, 0) + 1
    return degrees


def recall_value(degrees: dict[int, int]) -> float:
    """Log-recall: recalling one fact again pays off logarithmically,
    recalling new facts pays off linearly."""
    return sum(math.log1p(d) for d in degrees.values())


@dataclass
class RuleStats:
    """Scoring components of one rule."""

    precision: Fraction
    symmetry: int
    prior: Fraction
    recall: float
    degrees: dict[int, int]
    length: int
    rule_count: int
    body_count: int

    @property
    def complexity(self) -> float:
        return math.exp(-self.length)

    @property
    def corrected_precision(self) -> Fraction:
        return corrected_precision(self.precision, self.symmetry, self.prior)

    @property
    def utility(self) -> float:
        return float(self.corrected_precision) * self.recall * self.complexity


def rule_utility(stats: RuleStats) -> float:
    """(precision * symmetry / prior) * (recall * e^-length)."""
    return stats.utility


def compute_stats(rule: Rule, store: PatternStore,
                  mode: str = "unordered") -> RuleStats:
    """Assemble the full stats of one rule from store counts and the data."""
    prec = precision(rule, store, mode)
    rule_count, body_count = pattern_counts(rule, store, mode)
    degrees = recall_degrees(rule, store)
    return RuleStats(
        precision=prec,
        symmetry=symmetry_factor(rule, mode),
        prior=bayesian_prior(rule, store.db),
        recall=recall_value(degrees),
        degrees=degrees,
        length=rule.length,
        rule_count=rule_count,
        body_count=body_count,
    )


# ---------------------------------------------------------------------------
# Theory utility

GroupKey = tuple[int, ...]

EXPONENT_MODES = ("group", "theory")


def theory_utility(entries: Sequence[tuple[Rule, RuleStats]],
                   exponent_mode: str = "group") -> float:
    """Utility of a rule set: rules are grouped by canonical head atom; each
    group contributes (sum of corrected precisions) * joint log-recall *
    geometric-mean complexity.

    exponent_mode picks the denominator of the complexity exponent: the
    head group size ("group", default) or the whole theory size ("theory").
    """
    if exponent_mode not in EXPONENT_MODES:
        raise ValueError(f"unknown exponent mode {exponent_mode!r}")
    groups: dict[GroupKey, list[RuleStats]] = {}
    for rule, stats in entries:
        groups.setdefault(rule.head_shape(), []).append(stats)
    total = 0.0
    n_all = len(entries)
    for members in groups.values():
        prec_sum = Fraction(0)
        deg_sum: dict[int, int] = {}
        length_sum = 0
        for stats in members:
            prec_sum += stats.corrected_precision
            length_sum += stats.length
            for f, d in stats.degrees.items():
                deg_sum[f] = deg_sum.get(f, 0) + d
        recall = sum(math.log1p(d) for d in deg_sum.values())
        k = len(members) if exponent_mode == "group" else n_all
        total += float(prec_sum) * recall * math.exp(-length_sum / k)
    return total


class _Group:
    __slots__ = ("prec_sum", "degrees", "recall", "length_sum", "count")

    def __init__(self) -> None:
        self.prec_sum = Fraction(0)
        self.degrees: dict[int, int] = {}
        self.recall = 0.0
        self.length_sum = 0
        self.count = 0

    def term(self, k: int) -> float:
        if self.count == 0:
            return 0.0
        return float(self.prec_sum) * self.recall * math.exp(-self.length_sum / k)


class TheoryAggregate:
    """Incremental theory utility used by the greedy ordering loop.

    `score_with` evaluates the utility of the current theory plus one more
    rule without mutating state; `add` commits a rule.  Matches the
    from-scratch computation to floating-point accumulation error.
    """

    def __init__(self, exponent_mode: str = "group"):
        if exponent_mode not in EXPONENT_MODES:
            raise ValueError(f"unknown exponent mode {exponent_mode!r}")
        self.exponent_mode = exponent_mode
        self.groups: dict[GroupKey, _Group] = {}
        self.size = 0

    def _k(self, group: _Group) -> int:
        return group.count if self.exponent_mode == "group" else self.size

    def utility(self) -> float:
        return sum(g.term(self._k(g)) for g in self.groups.values())

    def add(self, rule: Rule, stats: RuleStats) -> None:
        group = self.groups.setdefault(rule.head_shape(), _Group())
        group.prec_sum += stats.corrected_precision
        group.length_sum += stats.length
        group.count += 1
        degs = group.degrees
        recall = group.recall
        for f, d in stats.degrees.items():
            old = degs.get(f, 0)
            recall += math.log1p(old + d) - math.log1p(old)
            degs[f] = old + d
        group.recall = recall
        self.size += 1

    def score_with(self, rule: Rule, stats: RuleStats) -> float:
        """Utility of (current theory + rule), leaving state untouched."""
        alpha = rule.head_shape()
        group = self.groups.get(alpha)
        if self.exponent_mode == "theory":
            # every group's complexity exponent shifts; recompute all terms
            new_size = self.size + 1
            total = 0.0
            for key, g in self.groups.items():
                if key != alpha:
                    total += g.term(new_size)
            total += self._extended_term(group, stats, new_size)
            return total
        total = 0.0
        for key, g in self.groups.items():
            if key != alpha:
                total += g.term(g.count)
        new_count = (group.count if group else 0) + 1
        total += self._extended_term(group, stats, new_count)
        return total

    @staticmethod
    def _extended_term(group: _Group | None, stats: RuleStats, k: int) -> float:
        if group is None:
            prec = stats.corrected_precision
            recall = stats.recall
            length_sum = stats.length
        else:
            prec = group.prec_sum + stats.corrected_precision
            recall = group.recall
            degs = group.degrees
            for f, d in stats.degrees.items():
                old = degs.get(f, 0)
                recall += math.log1p(old + d) - math.log1p(old)
            length_sum = group.length_sum + stats.length
        return float(prec) * recall * math.exp(-length_sum / k)
