"""rulemine: learn ranked Datalog theories from relational data.

Pipeline: parse facts into a Database, view it as a DataGraph, mine
recurrent ground patterns with budgeted walks, turn patterns into restricted
rule candidates scored by precision/recall-based utility, greedily assemble
a theory, and evaluate it on knowledge-graph completion.
"""

__version__ = "0.1.0"

from .data import (
    Database,
    DataGraph,
    FormatConfig,
    build_data_graph,
    load_facts,
    parse_facts,
    parse_rewrite_spec,
    rewrite_categoricals,
)
from .evaluation import EvalConfig, evaluate, match_body, read_test_facts, score_candidates
from .learner import (
    Candidate,
    LearnerConfig,
    Theory,
    TheoryEntry,
    choose_top_m,
    compute_paths_budget,
    generate_candidates,
    greedy_order,
    learn,
    load_theory_pairs,
    write_theory,
)
from .mining import (
    MinerConfig,
    PatternStore,
    brute_force_enumerate,
    double_unary_patterns,
    mine_patterns,
    recursion_bound,
)
from .patterns import (
    Pattern,
    Rule,
    canonical_form,
    canonical_key,
    enumerate_rules,
    is_body_connected,
    is_term_constrained,
    isomorphic,
    make_rule,
    parse_rule_text,
    symmetry_factor,
)
from .utility import (
    RuleStats,
    TheoryAggregate,
    bayesian_prior,
    compute_stats,
    passes_prior_filter,
    precision,
    recall_degrees,
    rule_utility,
    theory_utility,
)
