"""Knowledge-graph completion evaluation.

Queries p(h, ?) and p(?, t) are answered by summing the weights of rules
whose head matches the query and whose body has at least one grounding
consistent with the binding.  The true entity is ranked against the
candidate universe with mean-rank tie handling; the filtered protocol
removes candidates that form other known true facts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .data import DEFAULT_FORMAT, Database, DataGraph, FormatConfig
from .errors import DataError, ParseError
from .patterns import Atom, Rule

CANDIDATE_SCOPES = ("position", "predicate", "all")
DIRECTIONS = ("tail", "head", "both")


@dataclass(frozen=True)
class EvalConfig:
    hits_at: tuple[int, ...] = (1, 3, 10)
    direction: str = "both"
    filtered: bool = True
    candidate_scope: str = "position"

    def __post_init__(self) -> None:
        if any(k < 1 for k in self.hits_at):
            raise ValueError("hits@K cutoffs must be >= 1")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.candidate_scope not in CANDIDATE_SCOPES:
            raise ValueError(f"unknown candidate scope {self.candidate_scope!r}")


def read_test_facts(stream: Iterable[str], db: Database,
                    fmt: FormatConfig = DEFAULT_FORMAT) -> list[tuple[int, tuple[int, ...]]]:
    """Parse test facts against an existing database.

    Unseen constants and predicates are interned (so they can be referenced)
    but no facts are added: test entities contribute no training edges.
    """
    out: list[tuple[int, tuple[int, ...]]] = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.startswith(fmt.comment):
            continue
        fields = line.split(fmt.sep)
        if len(fields) not in (2, 3) or any(not f for f in fields):
            raise ParseError(
                f"expected 2 or 3 non-empty fields, got {len(fields)}: {line!r}",
                line=lineno,
            )
        if fmt.layout == "sro":
            subject, pred, rest = fields[0], fields[1], fields[2:]
        else:
            pred, subject, rest = fields[0], fields[1], fields[2:]
        names = (subject, rest[0]) if rest else (subject,)
        pid = db.intern_predicate(pred, len(names))
        out.append((pid, tuple(db.constants.intern(n) for n in names)))
    return out


def _pick_next(remaining: list[Atom], binding: dict[int, int]) -> int:
    best, best_bound = 0, -1
    for i, (_, slots) in enumerate(remaining):
        bound = sum(1 for s in set(slots) if s in binding)
        if bound > best_bound:
            best, best_bound = i, bound
    return best


def _body_solutions(atoms: list[Atom], graph: DataGraph,
                    binding: dict[int, int]) -> Iterator[dict[int, int]]:
    """Backtracking join over the adjacency index; yields every complete
    assignment of the atoms' variables consistent with the initial binding.
    Variables may bind to equal constants, as in plain first-order grounding.
    """
    db = graph.db
    if not atoms:
        yield binding
        return
    i = _pick_next(atoms, binding)
    pid, slots = atoms[i]
    rest = atoms[:i] + atoms[i + 1:]

    if len(slots) == 1:
        s = slots[0]
        if s in binding:
            if db.has_fact(pid, (binding[s],)):
                yield from _body_solutions(rest, graph, binding)
        else:
            for fid in db.facts_by_pred[pid]:
                nb = dict(binding)
                nb[s] = db.facts[fid][1][0]
                yield from _body_solutions(rest, graph, nb)
        return

    s, t = slots
    if s == t:
        if s in binding:
            if db.has_fact(pid, (binding[s], binding[s])):
                yield from _body_solutions(rest, graph, binding)
        else:
            for fid in db.facts_by_pred[pid]:
                a, b = db.facts[fid][1]
                if a == b:
                    nb = dict(binding)
                    nb[s] = a
                    yield from _body_solutions(rest, graph, nb)
        return

    sb, tb = s in binding, t in binding
    if sb and tb:
        if db.has_fact(pid, (binding[s], binding[t])):
            yield from _body_solutions(rest, graph, binding)
    elif sb or tb:
        bound_slot, free_slot, pos = (s, t, 0) if sb else (t, s, 1)
        c = binding[bound_slot]
        for fid in graph.binaries(c):
            fp, args = db.facts[fid]
            if fp != pid or args[pos] != c:
                continue
            nb = dict(binding)
            nb[free_slot] = args[1 - pos]
            yield from _body_solutions(rest, graph, nb)
    else:
        for fid in db.facts_by_pred[pid]:
            a, b = db.facts[fid][1]
            nb = dict(binding)
            nb[s] = a
            nb[t] = b
            yield from _body_solutions(rest, graph, nb)


def match_body(rule: Rule, graph: DataGraph, binding: dict[int, int]) -> bool:
    """True iff the rule body has at least one grounding consistent with the
    binding of the head variables."""
    atoms = [rule.pattern.atoms[i] for i in rule.body_indices]
    return next(_body_solutions(atoms, graph, dict(binding)), None) is not None


Query = tuple[int, int, str]  # (predicate id, known endpoint, "tail" | "head")


def _rule_predictions(rule: Rule, graph: DataGraph, query: Query) -> set[int]:
    """Entities this rule predicts for the query (empty if head mismatched)."""
    pid, known, direction = query
    hp, hs = rule.head_atom
    if hp != pid or len(hs) != 2:
        return set()
    if hs[0] == hs[1]:
        # repeated head variable: the only possible prediction is the known
        # endpoint itself
        if match_body(rule, graph, {hs[0]: known}):
            return {known}
        return set()
    bound_slot, free_slot = (hs[0], hs[1]) if direction == "tail" else (hs[1], hs[0])
    atoms = [rule.pattern.atoms[i] for i in rule.body_indices]
    ents: set[int] = set()
    for sol in _body_solutions(atoms, graph, {bound_slot: known}):
        ents.add(sol[free_slot])
    return ents


def _theory_pairs(theory) -> list[tuple[Rule, float]]:
    if hasattr(theory, "pairs"):
        return theory.pairs()
    return list(theory)


def score_candidates(query: Query, theory, graph: DataGraph) -> dict[int, float]:
    """Score every entity by the summed weights of rules whose head matches
    the query and whose body fires with that entity; each rule contributes
    at most once per entity.  Unscored entities are implicitly zero.
    """
    scores: dict[int, float] = {}
    for rule, weight in _theory_pairs(theory):
        for e in _rule_predictions(rule, graph, query):
            scores[e] = scores.get(e, 0.0) + weight
    return scores


def _candidate_sets(graph: DataGraph, scope: str):
    db = graph.db
    subjects: set[int] = set()
    objects: set[int] = set()
    by_pred: dict[int, tuple[set[int], set[int]]] = {}
    for pid, args in db.facts:
        if len(args) != 2:
            continue
        subjects.add(args[0])
        objects.add(args[1])
        if scope == "predicate":
            dom, rng = by_pred.setdefault(pid, (set(), set()))
            dom.add(args[0])
            rng.add(args[1])
    everything = set(range(graph.n_nodes))

    def candidates(pid: int, direction: str) -> set[int]:
        if scope == "all":
            return everything
        if scope == "predicate":
            dom, rng = by_pred.get(pid, (set(), set()))
            return rng if direction == "tail" else dom
        return objects if direction == "tail" else subjects

    return candidates


def evaluate(test_facts: Sequence[tuple[int, tuple[int, ...]]], theory,
             graph: DataGraph, cfg: EvalConfig = EvalConfig(),
             debug_rows: list | None = None) -> dict:
    """Rank the true entity of every binary test fact in the configured
    directions; returns {"mrr", "hits": {k: frac}, "n_queries"}.

    Ties share the mean of their optimistic and pessimistic ranks; filtered
    mode drops candidates forming other train/test-true facts.
    """
    pairs = _theory_pairs(theory)
    binary_tests = [(pid, args) for pid, args in test_facts if len(args) == 2]
    if not binary_tests:
        raise DataError("empty test set: no binary test facts to evaluate")
    known: set[tuple[int, int, int]] = set()
    for pid, args in graph.db.facts:
        if len(args) == 2:
            known.add((pid, args[0], args[1]))
    for pid, (a, b) in binary_tests:
        known.add((pid, a, b))

    candidates_for = _candidate_sets(graph, cfg.candidate_scope)
    directions = ("tail", "head") if cfg.direction == "both" else (cfg.direction,)

    rr_sum = 0.0
    hit_counts = {k: 0 for k in cfg.hits_at}
    n_queries = 0
    for pid, (h, t) in binary_tests:
        for direction in directions:
            known_e, true_e = (h, t) if direction == "tail" else (t, h)
            query: Query = (pid, known_e, direction)
            scores = score_candidates(query, pairs, graph)
            true_score = scores.get(true_e, 0.0)
            better = 0
            equal = 0
            for e in candidates_for(pid, direction):
                if e == true_e:
                    continue
                if cfg.filtered:
                    triple = (pid, known_e, e) if direction == "tail" else (pid, e, known_e)
                    if triple in known:
                        continue
                s = scores.get(e, 0.0)
                if s > true_score:
                    better += 1
                elif s == true_score:
                    equal += 1
            rank = 1.0 + better + equal / 2.0
            rr_sum += 1.0 / rank
            for k in cfg.hits_at:
                if rank <= k:
                    hit_counts[k] += 1
            n_queries += 1
            if debug_rows is not None:
                debug_rows.append(_debug_row(query, true_e, rank, scores, pairs, graph))

    return {
        "mrr": rr_sum / n_queries,
        "hits": {k: hit_counts[k] / n_queries for k in cfg.hits_at},
        "n_queries": n_queries,
    }


def _debug_row(query: Query, true_e: int, rank: float,
               scores: dict[int, float], pairs, graph: DataGraph) -> str:
    db = graph.db
    pid, known, direction = query
    pred = db.predicates.name_of(pid)
    kname = db.constants.name_of(known)
    qtext = f"{pred}({kname},?)" if direction == "tail" else f"{pred}(?,{kname})"
    top = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:5]
    cells = []
    for e, s in top:
        firing = [r.text for r, _ in pairs if e in _rule_predictions(r, graph, query)]
        cells.append(f"{db.constants.name_of(e)}:{s:.6g}:[{'; '.join(firing)}]")
    return "\t".join((qtext, db.constants.name_of(true_e), f"{rank:.6g}", *cells))
