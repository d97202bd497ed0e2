"""Abductive interpretation of time series with abstraction grammars."""

from .core import Observable, Observation, ObservationSequence, RelationTable, mutually_exclusive, obs_less, q_succ
from .dsl import KBError, KBSemanticError, KBSyntaxError, parse_kb
from .grammar import AbstractionGrammar, AbstractionPattern, KnowledgeBase, enumerate_patterns, extend_back, extend_forward, init_pattern
from .interpretation import Interpretation, InterpretationProblem, MatchError, covering_ratio, evidence_sets, validate
from .procedures import DEFAULT as registry
from .procedures import InsufficientEvidence, Signal
from .search import SearchConfig, SearchResult, construe, default_k
from .temporal import DifferenceConstraint, PredicateConstraint, TemporalNetwork, bind, check_predicates, propagate

__all__ = [
    "AbstractionGrammar", "AbstractionPattern", "DifferenceConstraint", "InsufficientEvidence", "Interpretation",
    "InterpretationProblem", "KBError", "KBSemanticError", "KBSyntaxError", "KnowledgeBase", "MatchError",
    "Observable", "Observation", "ObservationSequence", "PredicateConstraint", "RelationTable", "SearchConfig",
    "SearchResult", "Signal", "TemporalNetwork", "bind", "check_predicates", "construe", "covering_ratio",
    "default_k", "enumerate_patterns", "evidence_sets", "extend_back", "extend_forward", "init_pattern",
    "mutually_exclusive", "obs_less", "parse_kb", "propagate", "q_succ", "registry", "validate",
]
