"""In-place model maintenance for tuple inserts and deletes.

A tuple descends the tree: at a sum node it is routed to the child with
the nearest cluster centroid (under the rank transform frozen at learning
time) and that child's cluster size is adjusted; at a product node it is
split across all children; at a leaf the value count is adjusted. The
tree structure never changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..data import SampleTable
from ..errors import ModelInvariantError
from ..rdc import RdcParams, rdc
from .learn import LearnParams
from .nodes import Leaf, ProductNode, Rspn, SumNode

logger = logging.getLogger(__name__)


@dataclass
class UpdateBatch:
    """Inserts/deletes of fully augmented tuples at a declared sample rate."""

    operations: list[tuple[str, dict]] = field(default_factory=list)
    applied_sample_rate: float = 1.0

    def insert(self, tuple_values: dict) -> None:
        self.operations.append(("insert", tuple_values))

    def delete(self, tuple_values: dict) -> None:
        self.operations.append(("delete", tuple_values))

    def __len__(self) -> int:
        return len(self.operations)


def update_tuple(rspn: Rspn, tuple_values: dict, direction: str,
                 adjust_population: bool = True) -> Rspn:
    """Apply one insert/delete; the tuple must cover the model scope."""
    if direction not in ("insert", "delete"):
        raise ValueError(f"direction must be insert or delete, got {direction!r}")
    missing = rspn.scope - set(tuple_values)
    if missing:
        raise ModelInvariantError(
            f"update tuple missing scope columns {sorted(missing)}")
    if direction == "delete" and rspn.n_samples <= 0:
        raise ModelInvariantError("delete from a model with no population")
    delta = 1 if direction == "insert" else -1
    _descend(rspn.root, tuple_values, delta)
    rspn.n_samples = max(rspn.n_samples + delta, 0)
    if adjust_population:
        rspn.full_population_size = max(
            rspn.full_population_size + delta / rspn.sample_rate, 0.0)
    return rspn


def _descend(node, tuple_values: dict, delta: int) -> None:
    if isinstance(node, Leaf):
        node.adjust(tuple_values.get(node.column), delta)
        return
    if isinstance(node, ProductNode):
        for child in node.children:
            _descend(child, tuple_values, delta)
        return
    if isinstance(node, SumNode):
        ci = node.nearest_child(tuple_values)
        new_size = node.cluster_sizes[ci] + delta
        if new_size < 1:
            # structure is immutable: a cluster may not disappear
            logger.warning("sum node %s: cluster %d would underflow; "
                           "size clamped at 1", node.node_id, ci)
        else:
            node.cluster_sizes[ci] = new_size
        _descend(node.children[ci], tuple_values, delta)
        return
    raise ModelInvariantError(f"unknown node type {type(node)!r}")


def apply_batch(rspn: Rspn, batch: UpdateBatch, seed: int = 0) -> int:
    """Apply a batch, thinning updates to the model's own sample rate.

    Each operation is applied with probability ``sample_rate`` (seeded);
    the population size is adjusted by the full batch regardless of which
    operations were sampled. Returns the number of applied operations.
    """
    if abs(batch.applied_sample_rate - rspn.sample_rate) > 1e-12:
        raise ModelInvariantError(
            f"batch sample rate {batch.applied_sample_rate} does not match "
            f"model sample rate {rspn.sample_rate}")
    rng = np.random.default_rng(seed)
    applied = 0
    net = 0
    for op, values in batch.operations:
        net += 1 if op == "insert" else -1
        if rspn.sample_rate < 1.0 and rng.random() >= rspn.sample_rate:
            continue
        update_tuple(rspn, values, op, adjust_population=False)
        applied += 1
    rspn.full_population_size = max(rspn.full_population_size + net, 0.0)
    return applied


def drift_check(rspn: Rspn, fresh_sample: SampleTable,
                params: LearnParams = LearnParams()) -> list[dict]:
    """Re-test the independence behind every product split on fresh data.

    Returns one record per product node whose maximum cross-component
    dependence now exceeds the threshold; such models should be relearned.
    """
    violations = []
    rdc_params = params.rdc
    cache: dict[tuple[str, str], float] = {}

    def pair_value(c1: str, c2: str) -> float:
        key = (c1, c2) if c1 <= c2 else (c2, c1)
        if key not in cache:
            cache[key] = rdc(fresh_sample.data[c1], fresh_sample.data[c2],
                             rdc_params,
                             x_kind=fresh_sample.column(c1).kind,
                             y_kind=fresh_sample.column(c2).kind,
                             x_id=c1, y_id=c2)
        return cache[key]

    for node in rspn.iter_nodes():
        if not isinstance(node, ProductNode):
            continue
        worst = (0.0, None, None)
        for i, left in enumerate(node.children):
            for right in node.children[i + 1:]:
                for c1 in sorted(left.scope):
                    for c2 in sorted(right.scope):
                        if c1 not in fresh_sample.data or c2 not in fresh_sample.data:
                            continue
                        v = pair_value(c1, c2)
                        if v > worst[0]:
                            worst = (v, c1, c2)
        if worst[0] >= params.rdc_threshold:
            violations.append({"node_id": node.node_id, "max_rdc": worst[0],
                               "columns": (worst[1], worst[2])})
    return violations
