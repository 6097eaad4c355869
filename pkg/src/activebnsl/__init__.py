"""Active structure learning of discrete Bayesian networks from partial observations."""

from .algorithms import Mode, RunReport, make_source, naive_count, run_active, run_naive, sample_accounting
from .core import Dag, DiscreteBayesNet, Family, enumerate_dags, enumerate_families, true_score
from .equivalence import EquivalenceClass, ec_members, equivalence_key, group_into_ecs
from .estimation import SampleBoundParams, SampleStore, plugin_conditional_entropy, sample_bound
from .search import Constraints, ScoreTable, best_structure
from .stable import build_bd_network, build_d2, check_d1, verify_stability

__all__ = [
    "Constraints",
    "Dag",
    "DiscreteBayesNet",
    "EquivalenceClass",
    "Family",
    "Mode",
    "RunReport",
    "SampleBoundParams",
    "SampleStore",
    "ScoreTable",
    "best_structure",
    "build_bd_network",
    "build_d2",
    "check_d1",
    "ec_members",
    "enumerate_dags",
    "enumerate_families",
    "equivalence_key",
    "group_into_ecs",
    "make_source",
    "naive_count",
    "plugin_conditional_entropy",
    "run_active",
    "run_naive",
    "sample_accounting",
    "sample_bound",
    "true_score",
    "verify_stability",
]
