from .nodes import Bins, Leaf, ProductNode, Rspn, SumNode, validate_structure
from .inference import (Conjunct, Predicate, TargetExpr, conditional_expectation,
                        expectation, mpe, probability, second_moment,
                        translate_fd_predicate)
from .learn import LearnParams, cluster_rows, fit_leaf, learn_rspn
from .exact import build_exact_rspn
from .update import UpdateBatch, apply_batch, drift_check, update_tuple

__all__ = [
    "Bins", "Leaf", "ProductNode", "Rspn", "SumNode", "validate_structure",
    "Conjunct", "Predicate", "TargetExpr", "probability", "expectation",
    "conditional_expectation", "second_moment", "mpe", "translate_fd_predicate",
    "LearnParams", "learn_rspn", "cluster_rows", "fit_leaf", "build_exact_rspn",
    "UpdateBatch", "update_tuple", "apply_batch", "drift_check",
]
