"""Relational fact storage, categorical rewriting and the indexed data graph.

Facts are unary or binary atoms over interned constants.  A Database is an
append-only, deduplicated fact list; a DataGraph is its adjacency view with
nodes = constants and edges = facts.  Both are treated as immutable once
built and can be shared read-only across any number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import ArityConflictError, ParseError, RewriteSpecError


class SymbolTable:
    """Interns strings to dense integer ids in first-appearance order."""

    __slots__ = ("_names", "_ids")

    def __init__(self) -> None:
        self._names: list[str] = []
        self._ids: dict[str, int] = {}

    def intern(self, name: str) -> int:
        sid = self._ids.get(name)
        if sid is None:
            sid = len(self._names)
            self._ids[name] = sid
            self._names.append(name)
        return sid

    def id_of(self, name: str) -> int | None:
        return self._ids.get(name)

    def name_of(self, sid: int) -> str:
        return self._names[sid]

    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids


class Database:
    """Deduplicated set of unary/binary facts with dense integer ids.

    Endpoints of binary facts are ordered; a self-loop p(a, a) is a single
    fact.  Insertion is idempotent: re-adding an existing fact returns the
    original fact id.  Hot paths operate on ids only; the symbol tables are
    touched at I/O boundaries.
    """

    def __init__(self) -> None:
        self.constants = SymbolTable()
        self.predicates = SymbolTable()
        self.pred_arity: list[int] = []
        # fact id -> (predicate id, endpoint ids); endpoint tuple length is the arity
        self.facts: list[tuple[int, tuple[int, ...]]] = []
        self.fact_ids: dict[tuple[int, tuple[int, ...]], int] = {}
        self.facts_by_pred: list[list[int]] = []
        self.loop_counts: list[int] = []

    @property
    def n_facts(self) -> int:
        return len(self.facts)

    @property
    def n_constants(self) -> int:
        return len(self.constants)

    @property
    def n_predicates(self) -> int:
        return len(self.predicates)

    def intern_predicate(self, name: str, arity: int) -> int:
        if arity not in (1, 2):
            raise ArityConflictError(f"predicate {name!r}: unsupported arity {arity}")
        pid = self.predicates.id_of(name)
        if pid is None:
            pid = self.predicates.intern(name)
            self.pred_arity.append(arity)
            self.facts_by_pred.append([])
            self.loop_counts.append(0)
        elif self.pred_arity[pid] != arity:
            raise ArityConflictError(
                f"predicate {name!r} used with arity {arity} "
                f"but was previously used with arity {self.pred_arity[pid]}"
            )
        return pid

    def add_fact(self, pred: str, args: Iterable[str]) -> int:
        arg_names = tuple(args)
        pid = self.intern_predicate(pred, len(arg_names))
        arg_ids = tuple(self.constants.intern(a) for a in arg_names)
        return self.add_fact_ids(pid, arg_ids)

    def add_fact_ids(self, pid: int, arg_ids: tuple[int, ...]) -> int:
        if len(arg_ids) != self.pred_arity[pid]:
            raise ArityConflictError(
                f"predicate {self.predicates.name_of(pid)!r} is arity "
                f"{self.pred_arity[pid]}, got {len(arg_ids)} arguments"
            )
        key = (pid, arg_ids)
        fid = self.fact_ids.get(key)
        if fid is not None:
            return fid
        fid = len(self.facts)
        self.facts.append(key)
        self.fact_ids[key] = fid
        self.facts_by_pred[pid].append(fid)
        if len(arg_ids) == 2 and arg_ids[0] == arg_ids[1]:
            self.loop_counts[pid] += 1
        return fid

    def has_fact(self, pid: int, arg_ids: tuple[int, ...]) -> bool:
        return (pid, arg_ids) in self.fact_ids

    def pred_count(self, pid: int) -> int:
        return len(self.facts_by_pred[pid])

    def fact_text(self, fid: int) -> str:
        pid, args = self.facts[fid]
        inner = ",".join(self.constants.name_of(a) for a in args)
        return f"{self.predicates.name_of(pid)}({inner})"

    def lines(self) -> Iterator[str]:
        """Serialize back to the TSV fact format, in fact-id order."""
        for pid, args in self.facts:
            pred = self.predicates.name_of(pid)
            names = [self.constants.name_of(a) for a in args]
            if len(names) == 1:
                yield f"{names[0]}\t{pred}"
            else:
                yield f"{names[0]}\t{pred}\t{names[1]}"


@dataclass(frozen=True)
class FormatConfig:
    """Layout of the line-oriented fact format.

    layout "sro" reads `subject SEP relation SEP object` with the 2-field
    form `subject SEP relation` denoting a unary fact; "rso" puts the
    relation first.
    """

    sep: str = "\t"
    comment: str = "#"
    layout: str = "sro"

    def __post_init__(self) -> None:
        if self.layout not in ("sro", "rso"):
            raise ValueError(f"unknown layout {self.layout!r}")


DEFAULT_FORMAT = FormatConfig()


def parse_facts(stream: Iterable[str], fmt: FormatConfig = DEFAULT_FORMAT) -> Database:
    """Parse a line-oriented fact stream into a Database.

    Duplicate lines are silently deduplicated.  Raises ParseError for lines
    with a wrong field count and ArityConflictError when a predicate is used
    with inconsistent arity.
    """
    db = Database()
    add_lines(db, stream, fmt)
    return db


def add_lines(db: Database, stream: Iterable[str], fmt: FormatConfig = DEFAULT_FORMAT) -> int:
    """Add facts from a stream to an existing database; returns lines used."""
    used = 0
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.startswith(fmt.comment):
            continue
        fields = line.split(fmt.sep)
        if len(fields) not in (2, 3) or any(not f for f in fields):
            raise ParseError(
                f"expected 2 or 3 non-empty {fmt.sep!r}-separated fields, "
                f"got {len(fields)}: {line!r}",
                line=lineno,
            )
        if fmt.layout == "sro":
            subject, pred = fields[0], fields[1]
            rest = fields[2:]
        else:
            pred, subject = fields[0], fields[1]
            rest = fields[2:]
        try:
            if rest:
                db.add_fact(pred, (subject, rest[0]))
            else:
                db.add_fact(pred, (subject,))
        except ArityConflictError as exc:
            raise ArityConflictError(f"line {lineno}: {exc}") from None
        used += 1
    return used


def load_facts(path: str, fmt: FormatConfig = DEFAULT_FORMAT) -> Database:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_facts(fh, fmt)


def parse_rewrite_spec(stream: Iterable[str]) -> list[tuple[str, str]]:
    """Parse `predicate=subject|object` lines into a rewrite spec."""
    spec: list[tuple[str, str]] = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected predicate=subject|object, got {line!r}", line=lineno)
        pred, _, pos = line.partition("=")
        pred, pos = pred.strip(), pos.strip()
        if pos not in ("subject", "object"):
            raise ParseError(f"category position must be subject or object, got {pos!r}", line=lineno)
        spec.append((pred, pos))
    return spec


def rewrite_categoricals(
    db: Database, spec: list[tuple[str, str]]
) -> tuple[Database, list[tuple[str, str, str]]]:
    """Replace binary facts p(x, c) over category-valued predicates by unary
    facts p@c(x), one fresh predicate per category value.

    Returns the rewritten database and the mapping table
    (original predicate, category constant, derived predicate) needed to
    translate learned rules back.  An empty spec returns the input unchanged.
    """
    if not spec:
        return db, []
    positions: dict[int, str] = {}
    for pred, pos in spec:
        pid = db.predicates.id_of(pred)
        if pid is None:
            raise RewriteSpecError(f"rewrite spec names unknown predicate {pred!r}")
        if db.pred_arity[pid] != 2:
            raise RewriteSpecError(f"rewrite spec names non-binary predicate {pred!r}")
        if pos not in ("subject", "object"):
            raise RewriteSpecError(f"category position must be subject or object, got {pos!r}")
        positions[pid] = pos

    out = Database()
    mapping: list[tuple[str, str, str]] = []
    seen_derived: set[str] = set()
    for pid, args in db.facts:
        pred = db.predicates.name_of(pid)
        pos = positions.get(pid)
        if pos is None:
            out.add_fact(pred, tuple(db.constants.name_of(a) for a in args))
            continue
        cat_idx = 0 if pos == "subject" else 1
        cat = db.constants.name_of(args[cat_idx])
        kept = db.constants.name_of(args[1 - cat_idx])
        derived = f"{pred}@{cat}"
        if derived not in seen_derived:
            seen_derived.add(derived)
            mapping.append((pred, cat, derived))
        out.add_fact(derived, (kept,))
    return out, mapping


class DataGraph:
    """Adjacency-indexed view of a Database.

    unary_of[v] and binary_of[v] list the incident fact ids of node v sorted
    by fact id; a binary fact p(a, b) with a != b appears in both endpoint
    lists, a self-loop p(a, a) appears once.
    """

    __slots__ = ("db", "unary_of", "binary_of", "n_unary", "n_binary")

    def __init__(self, db: Database, unary_of: list[list[int]],
                 binary_of: list[list[int]], n_unary: int, n_binary: int):
        self.db = db
        self.unary_of = unary_of
        self.binary_of = binary_of
        self.n_unary = n_unary
        self.n_binary = n_binary

    @property
    def n_nodes(self) -> int:
        return len(self.binary_of)

    def binary_degree(self, v: int) -> int:
        if 0 <= v < len(self.binary_of):
            return len(self.binary_of[v])
        return 0

    def binaries(self, v: int) -> list[int]:
        if 0 <= v < len(self.binary_of):
            return self.binary_of[v]
        return []

    def unaries(self, v: int) -> list[int]:
        if 0 <= v < len(self.unary_of):
            return self.unary_of[v]
        return []


def build_data_graph(db: Database) -> DataGraph:
    """Build the adjacency view; deterministic for identical input."""
    n = db.n_constants
    unary_of: list[list[int]] = [[] for _ in range(n)]
    binary_of: list[list[int]] = [[] for _ in range(n)]
    n_unary = 0
    n_binary = 0
    for fid, (_, args) in enumerate(db.facts):
        if len(args) == 1:
            unary_of[args[0]].append(fid)
            n_unary += 1
        else:
            a, b = args
            binary_of[a].append(fid)
            if b != a:
                binary_of[b].append(fid)
            n_binary += 1
    return DataGraph(db, unary_of, binary_of, n_unary, n_binary)
