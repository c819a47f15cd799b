"""Segment-level counterfactual generation and Shapley attribution for LLM prompts."""

from .conllu import SentenceParse, Token, parse_conllu, validate_tree
from .engine import (Counterfactual, CounterfactualVector, count_valid,
                     enumerate_valid, realize_text, sample_valid, validate_vector)
from .rules import RuleTable, Removability, default_rules, load_rules, parse_rules
from .segmenter import (Segment, SegmentForest, build_forest, configure_alternatives,
                        expand_branch, merge_branch, render_tree)

__version__ = "0.1.0"

__all__ = [
    "Counterfactual",
    "CounterfactualVector",
    "Removability",
    "RuleTable",
    "Segment",
    "SegmentForest",
    "SentenceParse",
    "Token",
    "build_forest",
    "configure_alternatives",
    "count_valid",
    "default_rules",
    "enumerate_valid",
    "expand_branch",
    "load_rules",
    "merge_branch",
    "parse_conllu",
    "parse_rules",
    "realize_text",
    "render_tree",
    "sample_valid",
    "validate_tree",
    "validate_vector",
    "__version__",
]
