"""Tree nodes of a relational sum-product network.

Counts are stored as exact integers everywhere; weights and frequencies
are derived on read. This keeps insert/delete exactly invertible and
avoids drift from repeated renormalization.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelInvariantError
from ..rdc import RdcMatrix
from ..schema import FunctionalDependency

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-9


@dataclass
class Bins:
    """Equal-frequency bins for a continuous column beyond the distinct limit.

    Per-bin sums and squared sums keep first and second moments exact for
    fully covered bins; partially covered bins fall back to a uniform
    density inside the bin.
    """

    edges: np.ndarray        # len B+1, ascending
    counts: np.ndarray       # int64, len B
    sums: np.ndarray         # float64
    sumsqs: np.ndarray       # float64
    distinct: np.ndarray     # int64, distinct training values per bin

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def locate(self, v: float) -> int:
        """Bin index for a value; out-of-range values map to the edge bins."""
        i = int(np.searchsorted(self.edges, v, side="right")) - 1
        return min(max(i, 0), len(self.counts) - 1)


class Leaf:
    """Univariate distribution with exact value counts plus a NULL bucket."""

    __slots__ = ("column", "kind", "values", "counts", "null_count", "bins",
                 "node_id", "scope")

    def __init__(self, column: str, kind: str, values: np.ndarray,
                 counts: np.ndarray, null_count: int = 0,
                 bins: Bins | None = None):
        self.column = column
        self.kind = kind
        self.values = values          # sorted, NULL excluded
        self.counts = counts          # int64, aligned with values
        self.null_count = int(null_count)
        self.bins = bins
        self.node_id = -1
        self.scope = frozenset((column,))

    @property
    def support_count(self) -> int:
        stored = self.bins.total if self.bins is not None else int(self.counts.sum())
        return stored + self.null_count

    # -- predicate masks ---------------------------------------------------

    def _value_mask(self, conjuncts) -> np.ndarray:
        """Boolean mask over stored values; NULL lives outside and never matches."""
        mask = np.ones(len(self.values), dtype=bool)
        for conj in conjuncts:
            op, c = conj.op, conj.value
            if op == "notnull":
                continue
            if self.kind == "continuous":
                v = self.values
                if op == "=":
                    mask &= v == c
                elif op == "!=":
                    mask &= v != c
                elif op == "<":
                    mask &= v < c
                elif op == "<=":
                    mask &= v <= c
                elif op == ">":
                    mask &= v > c
                elif op == ">=":
                    mask &= v >= c
                elif op == "in":
                    mask &= np.isin(v, np.asarray(list(c), dtype=np.float64))
                else:
                    raise ModelInvariantError(f"unknown operator {op!r}")
            else:
                sel = np.fromiter((_cmp(val, op, c) for val in self.values),
                                  dtype=bool, count=len(self.values))
                mask &= sel
        return mask

    def mass(self, conjuncts) -> float:
        """Probability of the conjuncts over this distribution."""
        total = self.support_count
        if total == 0:
            return 0.0
        if self.bins is not None:
            return self._bin_mass(conjuncts) / total
        sel = self._value_mask(conjuncts)
        return float(self.counts[sel].sum()) / total

    def moment(self, conjuncts, power: int = 1, invert: bool = False,
               clamp_one: bool = False) -> float:
        """E[g(X) * 1_conjuncts] with g per the target role; NULL contributes 0."""
        total = self.support_count
        if total == 0:
            return 0.0
        if self.bins is not None:
            if invert:
                raise ModelInvariantError(
                    f"tuple-factor column {self.column} must not be binned")
            return self._bin_moment(conjuncts, power, clamp_one) / total
        sel = self._value_mask(conjuncts)
        if not sel.any():
            return 0.0
        if self.kind != "continuous":
            raise ModelInvariantError(
                f"moment of categorical column {self.column} is undefined")
        vals = self.values[sel]
        if clamp_one:
            vals = np.maximum(vals, 1.0)
        g = vals ** power
        if invert:
            g = 1.0 / g
        return float((g * self.counts[sel]).sum()) / total

    # -- binned variants ---------------------------------------------------

    def _bin_selected(self, conjuncts):
        """Per-bin selected fraction and selected interval under the conjuncts."""
        b = self.bins
        lo = b.edges[:-1].copy()
        hi = b.edges[1:].copy()
        frac = np.ones(len(b.counts))
        point_eq = None
        for conj in conjuncts:
            op, c = conj.op, conj.value
            if op == "notnull":
                continue
            if op == "=":
                point_eq = c if point_eq is None or point_eq == c else np.nan
            elif op == "in":
                # treat as union of points; approximate via per-point equality
                pass
            elif op in ("<", "<="):
                hi = np.minimum(hi, c)
            elif op in (">", ">="):
                lo = np.maximum(lo, c)
            elif op == "!=":
                continue  # removes measure-zero mass under the uniform model
        return lo, hi, frac, point_eq

    def _bin_mass(self, conjuncts) -> float:
        b = self.bins
        for conj in conjuncts:
            if conj.op == "in":
                return sum(self._bin_point_mass(p) for p in conj.value)
        lo, hi, _, point_eq = self._bin_selected(conjuncts)
        if point_eq is not None:
            if isinstance(point_eq, float) and math.isnan(point_eq):
                return 0.0
            return self._bin_point_mass(point_eq)
        width = b.edges[1:] - b.edges[:-1]
        overlap = np.clip(hi - lo, 0.0, None)
        frac = np.divide(overlap, width, out=np.zeros_like(width),
                         where=width > 0)
        # degenerate single-value bin: fully in or out
        degenerate = width == 0
        if degenerate.any():
            inside = (b.edges[:-1] >= lo) & (b.edges[:-1] <= hi)
            frac[degenerate] = inside[degenerate].astype(float)
        return float((frac * b.counts).sum())

    def _bin_point_mass(self, v: float) -> float:
        b = self.bins
        i = b.locate(v)
        if v < b.edges[0] or v > b.edges[-1]:
            return 0.0
        return b.counts[i] / max(int(b.distinct[i]), 1)

    def _bin_moment(self, conjuncts, power: int, clamp_one: bool) -> float:
        b = self.bins
        lo, hi, _, point_eq = self._bin_selected(conjuncts)
        if point_eq is not None:
            mass = self._bin_point_mass(point_eq)
            v = max(point_eq, 1.0) if clamp_one else point_eq
            return mass * v ** power
        total = 0.0
        for i in range(len(b.counts)):
            blo, bhi = b.edges[i], b.edges[i + 1]
            slo, shi = max(blo, lo[i]), min(bhi, hi[i])
            if shi < slo or b.counts[i] == 0:
                continue
            if slo <= blo and shi >= bhi:
                # fully covered: exact stored moments
                s = b.sums[i] if power == 1 else b.sumsqs[i]
                if clamp_one and blo < 1.0:
                    # factors are never binned; clamping binned bases is a
                    # uniform-model approximation like partial coverage
                    frac_below = self._uniform_frac(blo, bhi, blo, min(bhi, 1.0))
                    s = (1.0 - frac_below) * s + frac_below * b.counts[i]
                total += s
                continue
            width = bhi - blo
            frac = (shi - slo) / width if width > 0 else (1.0 if shi >= slo else 0.0)
            a, z = (max(slo, 1.0), max(shi, 1.0)) if clamp_one else (slo, shi)
            if power == 1:
                m = (a + z) / 2.0
            else:
                m = (a * a + a * z + z * z) / 3.0
            total += frac * b.counts[i] * m
        return total

    @staticmethod
    def _uniform_frac(blo, bhi, lo, hi) -> float:
        w = bhi - blo
        return 0.0 if w <= 0 else max(0.0, min(hi, bhi) - max(lo, blo)) / w

    # -- argmax / domain ---------------------------------------------------

    def argmax(self, conjuncts):
        """(frequency, value) of the most frequent value satisfying conjuncts.

        NULL is never produced as an assignment. Ties resolve to the
        smallest value in the column's order.
        """
        total = self.support_count
        if total == 0:
            return 0.0, None
        if self.bins is not None:
            lo, hi, _, point_eq = self._bin_selected(conjuncts)
            best_f, best_v = 0.0, None
            for i in range(len(self.bins.counts)):
                blo, bhi = self.bins.edges[i], self.bins.edges[i + 1]
                slo, shi = max(blo, lo[i]), min(bhi, hi[i])
                if shi < slo:
                    continue
                frac = self._uniform_frac(blo, bhi, slo, shi)
                f = self.bins.counts[i] * (frac if bhi > blo else 1.0)
                if f > best_f:
                    best_f, best_v = f, (slo + shi) / 2.0
            return best_f / total, best_v
        sel = self._value_mask(conjuncts)
        if not sel.any():
            return 0.0, None
        idx = np.nonzero(sel)[0]
        counts = self.counts[idx]
        best = idx[int(np.argmax(counts))]  # first max = smallest value
        return float(self.counts[best]) / total, self.values[best]

    def distinct_values(self) -> list | None:
        """Enumerable non-NULL domain; None when binned."""
        if self.bins is not None:
            return None
        return list(self.values)

    # -- updates -----------------------------------------------------------

    def adjust(self, value, delta: int) -> None:
        """Add/remove one observation; NULL passed as None or NaN."""
        is_null = value is None or (isinstance(value, float) and math.isnan(value))
        if is_null:
            if self.null_count + delta < 0:
                logger.warning("leaf %s: NULL count underflow clamped", self.column)
                self.null_count = 0
            else:
                self.null_count += delta
            return
        if self.bins is not None:
            v = float(value)
            i = self.bins.locate(v)
            if self.bins.counts[i] + delta < 0:
                logger.warning("leaf %s: bin count underflow clamped", self.column)
                return
            self.bins.counts[i] += delta
            self.bins.sums[i] += delta * v
            self.bins.sumsqs[i] += delta * v * v
            return
        if self.kind == "continuous":
            value = float(value)
            pos = int(np.searchsorted(self.values, value))
            found = pos < len(self.values) and self.values[pos] == value
        else:
            lst = self.values.tolist()
            pos = bisect.bisect_left([str(v) for v in lst], str(value))
            found = pos < len(lst) and lst[pos] == value
        if found:
            new_count = int(self.counts[pos]) + delta
            if new_count < 0:
                logger.warning("leaf %s: count underflow for %r clamped",
                               self.column, value)
                return
            if new_count == 0:
                self.values = np.delete(self.values, pos)
                self.counts = np.delete(self.counts, pos)
            else:
                self.counts[pos] = new_count
        else:
            if delta < 0:
                logger.warning("leaf %s: delete of unseen value %r ignored",
                               self.column, value)
                return
            self.values = np.insert(self.values, pos, value)
            self.counts = np.insert(self.counts, pos, delta)


def _cmp(val, op: str, c) -> bool:
    try:
        if op == "=":
            return val == c
        if op == "!=":
            return val != c
        if op == "in":
            return val in c
        if op == "<":
            return val < c
        if op == "<=":
            return val <= c
        if op == ">":
            return val > c
        if op == ">=":
            return val >= c
    except TypeError:
        return False
    raise ModelInvariantError(f"unknown operator {op!r}")


@dataclass
class EcdfSketch:
    """Frozen copula-rank transform of one clustering feature column.

    Maps a raw value to its training rank in [0, 1]; NULL maps to the
    dedicated rank 0. Continuous columns interpolate between quantile
    anchors; categorical columns look up exact values, with misses
    interpolated between lexicographic neighbors.
    """

    kind: str
    anchors: np.ndarray | list     # ascending values
    ranks: np.ndarray              # aligned ranks in (0, 1]

    def rank(self, value) -> float:
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return 0.0
        if self.kind == "continuous":
            if len(self.anchors) == 0:
                return 0.0
            return float(np.interp(float(value), self.anchors, self.ranks))
        keys = self.anchors
        if not len(keys):
            return 0.0
        pos = bisect.bisect_left(keys, str(value))
        if pos < len(keys) and keys[pos] == str(value):
            return float(self.ranks[pos])
        left = float(self.ranks[pos - 1]) if pos > 0 else 0.0
        right = float(self.ranks[pos]) if pos < len(keys) else 1.0
        return (left + right) / 2.0


class SumNode:
    """Mixture over row clusters; weights derived from exact cluster sizes."""

    __slots__ = ("children", "cluster_sizes", "feature_columns", "sketches",
                 "centroids", "node_id", "scope")

    def __init__(self, children, cluster_sizes, feature_columns, sketches,
                 centroids):
        self.children = list(children)
        self.cluster_sizes = [int(s) for s in cluster_sizes]
        self.feature_columns = tuple(feature_columns)
        self.sketches = sketches          # dict column -> EcdfSketch
        self.centroids = np.asarray(centroids, dtype=np.float64)
        self.node_id = -1
        self.scope = self.children[0].scope

    @property
    def weights(self) -> np.ndarray:
        sizes = np.asarray(self.cluster_sizes, dtype=np.float64)
        total = sizes.sum()
        if total == 0:
            return np.full(len(sizes), 1.0 / len(sizes))
        return sizes / total

    def feature_vector(self, tuple_values: dict) -> np.ndarray:
        return np.array([self.sketches[c].rank(tuple_values.get(c))
                         for c in self.feature_columns])

    def nearest_child(self, tuple_values: dict) -> int:
        """Closest centroid by Euclidean distance; ties -> lowest index."""
        f = self.feature_vector(tuple_values)
        d = np.linalg.norm(self.centroids - f[None, :], axis=1)
        return int(np.argmin(d))


class ProductNode:
    """Independent column groups; child scopes are pairwise disjoint."""

    __slots__ = ("children", "node_id", "scope")

    def __init__(self, children):
        self.children = list(children)
        self.scope = frozenset().union(*(c.scope for c in self.children))
        self.node_id = -1


@dataclass
class Rspn:
    """A learned model over one table or one full outer join."""

    root: object
    scope: frozenset
    table_set: frozenset
    n_samples: int
    full_population_size: float
    sample_rate: float
    rdc_snapshot: RdcMatrix | None = None
    fd_dictionaries: list[FunctionalDependency] = field(default_factory=list)
    indicator_cols: dict = field(default_factory=dict)       # table -> column
    factor_cols: dict = field(default_factory=dict)          # fk key -> raw F column
    join_factor_cols: dict = field(default_factory=dict)     # fk key -> F' column
    column_kinds: dict = field(default_factory=dict)
    rspn_id: str = ""

    def __post_init__(self):
        assign_node_ids(self.root)

    def iter_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, (SumNode, ProductNode)):
                stack.extend(reversed(node.children))

    def leaves(self):
        return [n for n in self.iter_nodes() if isinstance(n, Leaf)]

    def distinct_values(self, column: str) -> list | None:
        """Union of stored values across this column's leaves; None if binned."""
        out: set = set()
        for leaf in self.leaves():
            if leaf.column != column:
                continue
            vals = leaf.distinct_values()
            if vals is None:
                return None
            out.update(vals)
        if not out:
            return None
        return sorted(out)

    def structure_counts(self) -> dict:
        counts = {"sum": 0, "product": 0, "leaf": 0}
        depth = 0
        stack = [(self.root, 1)]
        while stack:
            node, d = stack.pop()
            depth = max(depth, d)
            if isinstance(node, SumNode):
                counts["sum"] += 1
                stack.extend((c, d + 1) for c in node.children)
            elif isinstance(node, ProductNode):
                counts["product"] += 1
                stack.extend((c, d + 1) for c in node.children)
            else:
                counts["leaf"] += 1
        counts["depth"] = depth
        return counts


def assign_node_ids(root) -> int:
    """Stable preorder ids, reassigned after construction or load."""
    next_id = 0
    stack = [root]
    while stack:
        node = stack.pop()
        node.node_id = next_id
        next_id += 1
        if isinstance(node, (SumNode, ProductNode)):
            stack.extend(reversed(node.children))
    return next_id


def validate_structure(rspn: Rspn) -> None:
    """Assert completeness, decomposability and count consistency."""
    def visit(node) -> frozenset:
        if isinstance(node, Leaf):
            if node.bins is None:
                if (node.counts < 0).any() or node.null_count < 0:
                    raise ModelInvariantError(f"leaf {node.column}: negative count")
            elif (node.bins.counts < 0).any():
                raise ModelInvariantError(f"leaf {node.column}: negative bin count")
            return node.scope
        if isinstance(node, ProductNode):
            if len(node.children) < 2:
                raise ModelInvariantError("product node with fewer than 2 children")
            union: set = set()
            for child in node.children:
                s = visit(child)
                if union & s:
                    raise ModelInvariantError(
                        f"product node {node.node_id}: overlapping child scopes")
                union |= s
            if frozenset(union) != node.scope:
                raise ModelInvariantError(
                    f"product node {node.node_id}: scope mismatch")
            return node.scope
        if isinstance(node, SumNode):
            if len(node.children) < 2:
                raise ModelInvariantError("sum node with fewer than 2 children")
            if len(node.cluster_sizes) != len(node.children):
                raise ModelInvariantError("sum node: sizes/children mismatch")
            if any(s < 1 for s in node.cluster_sizes):
                raise ModelInvariantError("sum node: cluster size below 1")
            w = node.weights
            if abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
                raise ModelInvariantError("sum node weights do not sum to 1")
            scopes = [visit(c) for c in node.children]
            if any(s != scopes[0] for s in scopes[1:]):
                raise ModelInvariantError(
                    f"sum node {node.node_id}: children scopes differ")
            return scopes[0]
        raise ModelInvariantError(f"unknown node type {type(node)!r}")

    root_scope = visit(rspn.root)
    if root_scope != rspn.scope:
        raise ModelInvariantError("root scope does not match model scope")
