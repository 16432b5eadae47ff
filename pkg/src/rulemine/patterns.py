"""Variable-level patterns, canonical labelling, rules and shape restrictions.

A pattern is a conjunction of atoms over variable slots, viewed as a small
labelled graph with endpoint-ordered edges.  Canonicalization works by
exhaustive minimization over slot renumberings, which is cheap because mined
patterns have at most a handful of slots.  All functions here are pure and
safe to call concurrently.
"""

from __future__ import annotations

import itertools
import re
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from .data import Database
from .errors import ParseError, PatternTooLargeError

# (predicate id, variable slots); len(slots) is the arity
Atom = tuple[int, tuple[int, ...]]

DEFAULT_NODE_CAP = 8

_PERMS: dict[int, tuple[tuple[int, ...], ...]] = {}


def _perms(n: int) -> tuple[tuple[int, ...], ...]:
    perms = _PERMS.get(n)
    if perms is None:
        perms = tuple(itertools.permutations(range(n)))
        _PERMS[n] = perms
    return perms


@dataclass(frozen=True)
class Pattern:
    """A set of atoms over variable slots 0..var_count-1.

    Invariants: every slot is used by at least one atom, no duplicate atom,
    arities are 1 or 2.
    """

    var_count: int
    atoms: tuple[Atom, ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise ValueError("pattern must contain at least one atom")
        used: set[int] = set()
        for _, slots in self.atoms:
            if len(slots) not in (1, 2):
                raise ValueError(f"unsupported atom arity {len(slots)}")
            for s in slots:
                if not 0 <= s < self.var_count:
                    raise ValueError(f"slot {s} out of range for var_count {self.var_count}")
                used.add(s)
        if len(used) != self.var_count:
            raise ValueError("every variable slot must be used by some atom")
        if len(set(self.atoms)) != len(self.atoms):
            raise ValueError("duplicate atom in pattern")

    @property
    def length(self) -> int:
        return len(self.atoms)


def pattern_of(db: Database, fact_ids: Sequence[int]) -> tuple[tuple[Atom, ...], tuple[int, ...]]:
    """Extract the variable-level atoms of a fact set plus the node list.

    Nodes are numbered in first-appearance order over facts sorted by id, so
    the result is a deterministic function of the fact set.
    """
    slot_of: dict[int, int] = {}
    nodes: list[int] = []
    atoms: list[Atom] = []
    for fid in fact_ids:
        pid, args = db.facts[fid]
        slots = []
        for c in args:
            s = slot_of.get(c)
            if s is None:
                s = len(nodes)
                slot_of[c] = s
                nodes.append(c)
            slots.append(s)
        atoms.append((pid, tuple(slots)))
    return tuple(atoms), tuple(nodes)


def _relabel(atoms: Iterable[Atom], perm: Sequence[int]) -> tuple[Atom, ...]:
    return tuple(sorted((p, tuple(perm[s] for s in slots)) for p, slots in atoms))


def _pack(atoms: Iterable[Atom]) -> bytes:
    parts = []
    for pid, slots in atoms:
        parts.append(struct.pack(f"<IB{len(slots)}B", pid, len(slots), *slots))
    return b"".join(parts)


@lru_cache(maxsize=None)
def canonicalize_atoms(
    atoms: tuple[Atom, ...], var_count: int, node_cap: int = DEFAULT_NODE_CAP
) -> tuple[tuple[Atom, ...], bytes, tuple[int, ...]]:
    """Minimize the atom set over all slot renumberings.

    Returns (canonical atoms, key bytes, permutation) where permutation maps
    input slots to canonical slots.  Two atom sets receive equal keys iff
    they are isomorphic as labelled, endpoint-ordered variable graphs.
    Cached: the result is a pure function of the arguments and the same
    shapes recur for every grounding.
    """
    if var_count > node_cap:
        raise PatternTooLargeError(
            f"pattern has {var_count} variables, canonicalization cap is {node_cap}"
        )
    best: tuple[Atom, ...] | None = None
    best_perm: tuple[int, ...] = tuple(range(var_count))
    for perm in _perms(var_count):
        cand = _relabel(atoms, perm)
        if best is None or cand < best:
            best = cand
            best_perm = perm
    assert best is not None
    return best, _pack(best), best_perm


def canonical_form(p: Pattern, node_cap: int = DEFAULT_NODE_CAP) -> Pattern:
    atoms, _, _ = canonicalize_atoms(p.atoms, p.var_count, node_cap)
    return Pattern(p.var_count, atoms)


def canonical_key(p: Pattern, node_cap: int = DEFAULT_NODE_CAP) -> bytes:
    _, key, _ = canonicalize_atoms(p.atoms, p.var_count, node_cap)
    return key


def _normalize_unordered(atoms: Iterable[Atom]) -> list[Atom]:
    # Endpoint order discarded: edges compared as node sets.  Kept as a
    # sorted list (not a set) because p(x,y) and p(y,x) collapse to the
    # same normalized atom and multiplicity must be preserved.
    return sorted((p, tuple(sorted(slots))) for p, slots in atoms)


@lru_cache(maxsize=None)
def unordered_key(atoms: tuple[Atom, ...], var_count: int,
                  node_cap: int = DEFAULT_NODE_CAP) -> bytes:
    """Canonical key under set-semantics edges (orientation ignored)."""
    if var_count > node_cap:
        raise PatternTooLargeError(
            f"pattern has {var_count} variables, canonicalization cap is {node_cap}"
        )
    best: list[Atom] | None = None
    for perm in _perms(var_count):
        cand = _normalize_unordered((p, tuple(perm[s] for s in slots)) for p, slots in atoms)
        if best is None or cand < best:
            best = cand
    assert best is not None
    return _pack(best)


def _match_atoms(atoms1: tuple[Atom, ...], v1: int,
                 atoms2: tuple[Atom, ...], v2: int, ordered: bool) -> bool:
    if v1 != v2 or len(atoms1) != len(atoms2):
        return False
    if ordered:
        target = sorted(atoms2)
        for perm in _perms(v1):
            if sorted((p, tuple(perm[s] for s in slots)) for p, slots in atoms1) == target:
                return True
        return False
    target_u = _normalize_unordered(atoms2)
    for perm in _perms(v1):
        cand = _normalize_unordered((p, tuple(perm[s] for s in slots)) for p, slots in atoms1)
        if cand == target_u:
            return True
    return False


def isomorphic(p1: Pattern, p2: Pattern, ordered: bool = True) -> bool:
    """True iff a slot bijection maps atoms onto atoms, preserving predicate
    labels and (in ordered mode) endpoint order."""
    return _match_atoms(p1.atoms, p1.var_count, p2.atoms, p2.var_count, ordered)


@lru_cache(maxsize=None)
def automorphisms(atoms: tuple[Atom, ...], var_count: int) -> tuple[tuple[int, ...], ...]:
    """All slot permutations that map the atom set onto itself (ordered)."""
    target = sorted(atoms)
    return tuple(
        perm for perm in _perms(var_count)
        if sorted((p, tuple(perm[s] for s in slots)) for p, slots in atoms) == target
    )


def subpattern(p: Pattern, keep: Sequence[int]) -> Pattern:
    """Sub-pattern induced by a subset of atom indices, slots compacted in
    first-appearance order."""
    remap: dict[int, int] = {}
    atoms: list[Atom] = []
    for i in keep:
        pid, slots = p.atoms[i]
        new_slots = []
        for s in slots:
            t = remap.get(s)
            if t is None:
                t = len(remap)
                remap[s] = t
            new_slots.append(t)
        atoms.append((pid, tuple(new_slots)))
    return Pattern(len(remap), tuple(atoms))


class Rule:
    """A Datalog rule: one atom of its pattern is the head, the rest the body.

    Equality and ordering go through the canonical text form, which is
    invariant under variable renaming.
    """

    __slots__ = ("pattern", "head_index", "text")

    def __init__(self, pattern: Pattern, head_index: int, text: str):
        if not 0 <= head_index < pattern.length:
            raise ValueError("head index out of range")
        if pattern.length < 2:
            raise ValueError("rule body must be nonempty")
        self.pattern = pattern
        self.head_index = head_index
        self.text = text

    @property
    def head_atom(self) -> Atom:
        return self.pattern.atoms[self.head_index]

    @property
    def body_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.pattern.length) if i != self.head_index)

    @property
    def length(self) -> int:
        return self.pattern.length

    def body_pattern(self) -> Pattern:
        return subpattern(self.pattern, self.body_indices)

    def head_shape(self) -> tuple[int, ...]:
        """Canonical head-atom identity: predicate plus variable shape.

        Heads differing only by variable names collapse to the same value;
        p(X, X) is distinguished from p(X, Y).
        """
        pid, slots = self.head_atom
        if len(slots) == 1:
            return (pid, 1, 0)
        return (pid, 2, 1 if slots[0] == slots[1] else 0)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Rule) and self.text == other.text

    def __hash__(self) -> int:
        return hash(self.text)

    def __lt__(self, other: "Rule") -> bool:
        return self.text < other.text

    def __repr__(self) -> str:
        return f"Rule({self.text!r})"


def _render_atom(name: str, slots: tuple[int, ...]) -> str:
    return f"{name}({','.join('V%d' % s for s in slots)})"


def rule_text(pattern: Pattern, head_index: int, db: Database,
              node_cap: int = DEFAULT_NODE_CAP) -> str:
    """Canonical text form `body_atom & ... -> head_atom`.

    Variables are renumbered by minimizing over all slot permutations with
    predicate-name comparison, so isomorphic rules print identically; body
    atoms are sorted by (predicate name, slot tuple).
    """
    if pattern.var_count > node_cap:
        raise PatternTooLargeError(
            f"rule pattern has {pattern.var_count} variables, cap is {node_cap}"
        )
    names = [db.predicates.name_of(p) for p, _ in pattern.atoms]
    head_name = names[head_index]
    head_slots = pattern.atoms[head_index][1]
    body = [(names[i], pattern.atoms[i][1]) for i in range(pattern.length) if i != head_index]
    best = None
    for perm in _perms(pattern.var_count):
        cand = (
            (head_name, tuple(perm[s] for s in head_slots)),
            tuple(sorted((n, tuple(perm[s] for s in slots)) for n, slots in body)),
        )
        if best is None or cand < best:
            best = cand
    assert best is not None
    head_t, body_t = best
    lhs = " & ".join(_render_atom(n, slots) for n, slots in body_t)
    return f"{lhs} -> {_render_atom(*head_t)}"


def make_rule(pattern: Pattern, head_index: int, db: Database,
              node_cap: int = DEFAULT_NODE_CAP) -> Rule:
    return Rule(pattern, head_index, rule_text(pattern, head_index, db, node_cap))


def pattern_text(pattern: Pattern, db: Database, node_cap: int = DEFAULT_NODE_CAP) -> str:
    """Canonical pattern rendering: variables renumbered by minimizing over
    slot permutations with predicate-name comparison, atoms sorted."""
    if pattern.var_count > node_cap:
        raise PatternTooLargeError(
            f"pattern has {pattern.var_count} variables, cap is {node_cap}"
        )
    named = [(db.predicates.name_of(p), slots) for p, slots in pattern.atoms]
    best = None
    for perm in _perms(pattern.var_count):
        cand = tuple(sorted((n, tuple(perm[s] for s in slots)) for n, slots in named))
        if best is None or cand < best:
            best = cand
    assert best is not None
    return " & ".join(_render_atom(n, slots) for n, slots in best)


_ATOM_RE = re.compile(r"^\s*([^()\s]+)\(V(\d+)(?:,V(\d+))?\)\s*$")


def parse_rule_text(text: str, db: Database) -> Rule:
    """Parse the canonical rule grammar back into a Rule over db's symbols."""
    if "->" not in text:
        raise ParseError(f"rule text missing '->': {text!r}")
    lhs, _, rhs = text.partition("->")
    atoms: list[Atom] = []
    max_slot = -1
    parts = [a for a in lhs.split("&")] + [rhs]
    for part in parts:
        m = _ATOM_RE.match(part)
        if not m:
            raise ParseError(f"malformed atom {part.strip()!r} in rule {text!r}")
        name, s0, s1 = m.group(1), m.group(2), m.group(3)
        slots = (int(s0),) if s1 is None else (int(s0), int(s1))
        pid = db.predicates.id_of(name)
        if pid is None:
            raise ParseError(f"rule uses unknown predicate {name!r}")
        if db.pred_arity[pid] != len(slots):
            raise ParseError(
                f"rule uses {name!r} with arity {len(slots)}, data has arity {db.pred_arity[pid]}"
            )
        atoms.append((pid, slots))
        max_slot = max(max_slot, *slots)
    pattern = Pattern(max_slot + 1, tuple(atoms))
    return make_rule(pattern, pattern.length - 1, db)


# ---------------------------------------------------------------------------
# Shape restrictions


def _atom_counts_per_slot(atoms: Iterable[Atom], var_count: int) -> tuple[list[int], list[int]]:
    unary = [0] * var_count
    binary = [0] * var_count
    for _, slots in atoms:
        bucket = unary if len(slots) == 1 else binary
        for s in set(slots):
            bucket[s] += 1
    return unary, binary


def is_term_constrained(rule: Rule) -> bool:
    """Every variable of the rule occurs in at least two of its atoms."""
    unary, binary = _atom_counts_per_slot(rule.pattern.atoms, rule.pattern.var_count)
    return all(u + b >= 2 for u, b in zip(unary, binary))


def _atoms_connected(atoms: Sequence[Atom]) -> bool:
    if not atoms:
        return False
    if len(atoms) == 1:
        return True
    slot_to_atoms: dict[int, list[int]] = {}
    for i, (_, slots) in enumerate(atoms):
        for s in slots:
            slot_to_atoms.setdefault(s, []).append(i)
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for s in atoms[i][1]:
            for j in slot_to_atoms[s]:
                if j not in seen:
                    seen.add(j)
                    frontier.append(j)
    return len(seen) == len(atoms)


def is_body_connected(rule: Rule) -> bool:
    """The body atoms form a single component over shared variables."""
    return _atoms_connected([rule.pattern.atoms[i] for i in rule.body_indices])


def is_connected(pattern: Pattern) -> bool:
    return _atoms_connected(pattern.atoms)


def _is_double_unary(pattern: Pattern) -> bool:
    return (
        pattern.length == 2
        and pattern.var_count == 1
        and all(len(slots) == 1 for _, slots in pattern.atoms)
    )


def satisfies_degree_limits(pattern: Pattern) -> bool:
    """Each variable is in at most two binary atoms and one unary atom,
    with the two-unaries-on-one-variable pattern allowed as a special case."""
    if _is_double_unary(pattern):
        return True
    unary, binary = _atom_counts_per_slot(pattern.atoms, pattern.var_count)
    return all(u <= 1 for u in unary) and all(b <= 2 for b in binary)


def _head_safe(pattern: Pattern, head_index: int) -> bool:
    head_slots = set(pattern.atoms[head_index][1])
    body_slots: set[int] = set()
    for i, (_, slots) in enumerate(pattern.atoms):
        if i != head_index:
            body_slots.update(slots)
    return head_slots <= body_slots


def enumerate_rules(pattern: Pattern, db: Database,
                    node_cap: int = DEFAULT_NODE_CAP) -> list[Rule]:
    """All restricted rule candidates whose body-and-head pattern is `pattern`.

    One candidate per head-atom choice, deduplicated by canonical text;
    every returned rule is connected, body-connected, term-constrained,
    head-safe and within the per-variable degree limits.  Sorted by text.
    """
    if pattern.length < 2:
        return []
    if not is_connected(pattern) or not satisfies_degree_limits(pattern):
        return []
    out: dict[str, Rule] = {}
    for h in range(pattern.length):
        if not _head_safe(pattern, h):
            continue
        rule = make_rule(pattern, h, db, node_cap)
        if not is_body_connected(rule) or not is_term_constrained(rule):
            continue
        out.setdefault(rule.text, rule)
    return [out[t] for t in sorted(out)]


def symmetry_factor(rule: Rule, mode: str = "unordered") -> int:
    """Number of atom subsets of the rule pattern, of body size, isomorphic
    to the body pattern.

    Always >= 1 (the body itself matches).  In "unordered" mode binary atoms
    are compared as node sets; "ordered" preserves endpoint order.
    """
    if mode not in ("unordered", "ordered"):
        raise ValueError(f"unknown symmetry mode {mode!r}")
    ordered = mode == "ordered"
    body = rule.body_pattern()
    count = 0
    for drop in range(rule.pattern.length):
        keep = tuple(i for i in range(rule.pattern.length) if i != drop)
        sub = subpattern(rule.pattern, keep)
        if _match_atoms(sub.atoms, sub.var_count, body.atoms, body.var_count, ordered):
            count += 1
    return count
