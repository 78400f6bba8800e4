"""Structure learning: dependence-based column splits, k-means row splits.

The recursion over (row subset, column subset) emits a product node
whenever the dependence graph over the remaining columns falls apart into
connected components, clusters rows into two groups otherwise, and stops
clustering once a slice holds less than ``min_instance_fraction`` of the
training rows (falling back to an independence assumption). Leaves store
exact value frequencies, switching to equal-frequency bins only beyond
``distinct_value_limit`` distinct values.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata
from sklearn.cluster import KMeans

from ..data import SampleTable, null_mask
from ..rdc import RdcMatrix, RdcParams, _max_canonical_correlation, \
    _sine_features, copula_ranks
from .nodes import Bins, EcdfSketch, Leaf, ProductNode, Rspn, SumNode

logger = logging.getLogger(__name__)

ECDF_ANCHORS = 512


@dataclass(frozen=True)
class LearnParams:
    rdc_threshold: float = 0.3
    min_instance_fraction: float = 0.01
    distinct_value_limit: int = 100_000
    cluster_count: int = 2
    seed: int = 0
    rdc: RdcParams = field(default_factory=RdcParams)

    def __post_init__(self):
        if not 0.0 < self.min_instance_fraction < 1.0:
            raise ValueError("min_instance_fraction must be in (0, 1)")
        if not 0.0 < self.rdc_threshold < 1.0:
            raise ValueError("rdc_threshold must be in (0, 1)")
        if self.cluster_count < 2:
            raise ValueError("cluster_count must be >= 2")


def _derive_seed(seed: int, path: str) -> int:
    return (seed & 0x7FFFFFFF) ^ zlib.crc32(path.encode("utf-8"))


def fit_leaf(values: np.ndarray, kind: str,
             distinct_value_limit: int = 100_000) -> Leaf:
    """Exact value->count map; equal-frequency bins beyond the distinct limit."""
    column = ""  # caller fills in
    nulls = null_mask(values, kind)
    null_count = int(nulls.sum())
    nn = values[~nulls]
    if kind == "categorical":
        if len(nn):
            uniq, counts = np.unique(np.array([str(v) for v in nn]),
                                     return_counts=True)
            vals = np.array(list(uniq), dtype=object)
        else:
            vals = np.array([], dtype=object)
            counts = np.array([], dtype=np.int64)
        return Leaf(column, kind, vals, counts.astype(np.int64), null_count)

    nn = np.sort(nn.astype(np.float64))
    uniq, counts = np.unique(nn, return_counts=True)
    if len(uniq) <= distinct_value_limit:
        return Leaf(column, kind, uniq, counts.astype(np.int64), null_count)

    # equal-frequency binning with exact per-bin moments
    n_bins = distinct_value_limit
    splits = np.array_split(nn, n_bins)
    splits = [s for s in splits if len(s)]
    edges = [splits[0][0]]
    counts_b, sums_b, sumsqs_b, distinct_b = [], [], [], []
    for s in splits:
        edges.append(s[-1])
        counts_b.append(len(s))
        sums_b.append(float(s.sum()))
        sumsqs_b.append(float((s * s).sum()))
        distinct_b.append(len(np.unique(s)))
    bins = Bins(edges=np.asarray(edges, dtype=np.float64),
                counts=np.asarray(counts_b, dtype=np.int64),
                sums=np.asarray(sums_b), sumsqs=np.asarray(sumsqs_b),
                distinct=np.asarray(distinct_b, dtype=np.int64))
    return Leaf(column, kind, np.array([]), np.array([], dtype=np.int64),
                null_count, bins=bins)


def _fit_named_leaf(table: SampleTable, rows: np.ndarray, column: str,
                    params: LearnParams) -> Leaf:
    leaf = fit_leaf(table.data[column][rows], table.column(column).kind,
                    params.distinct_value_limit)
    leaf.column = column
    leaf.scope = frozenset((column,))
    return leaf


def _rank_features(table: SampleTable, rows: np.ndarray,
                   columns) -> np.ndarray:
    """Clustering feature space: per-column copula rank, NULL pinned to 0."""
    feats = np.zeros((len(rows), len(columns)))
    for j, col in enumerate(columns):
        arr = table.data[col][rows]
        kind = table.column(col).kind
        nulls = null_mask(arr, kind)
        nn = arr[~nulls]
        if len(nn):
            if kind == "categorical":
                _, codes = np.unique(np.array([str(v) for v in nn]),
                                     return_inverse=True)
                r = rankdata(codes, method="average")
            else:
                r = rankdata(nn.astype(np.float64), method="average")
            feats[~nulls, j] = r / len(nn)
    return feats


def _build_sketch(table: SampleTable, rows: np.ndarray, column: str) -> EcdfSketch:
    """Compress the training rank transform so updates can reuse it."""
    kind = table.column(column).kind
    arr = table.data[column][rows]
    nulls = null_mask(arr, kind)
    nn = arr[~nulls]
    if not len(nn):
        return EcdfSketch(kind, np.array([]) if kind == "continuous" else [],
                          np.array([]))
    if kind == "categorical":
        uniq, counts = np.unique(np.array([str(v) for v in nn]),
                                 return_counts=True)
        cum = np.cumsum(counts)
        ranks = (cum - (counts - 1) / 2.0) / len(nn)
        return EcdfSketch(kind, list(uniq), ranks)
    vals = np.sort(nn.astype(np.float64))
    ranks = rankdata(vals, method="average") / len(vals)
    if len(vals) > ECDF_ANCHORS:
        idx = np.unique(np.linspace(0, len(vals) - 1, ECDF_ANCHORS).astype(int))
        vals, ranks = vals[idx], ranks[idx]
    else:
        vals, keep = np.unique(vals, return_index=True)
        ranks = ranks[keep]
    return EcdfSketch(kind, vals, ranks)


def cluster_rows(table: SampleTable, rows: np.ndarray, columns, k: int,
                 seed: int):
    """Seeded k-means in copula-rank space.

    Returns (labels, centroids, sketches). Fewer than k distinct feature
    rows yields a single cluster (the caller then falls back to an
    independence split). An empty cluster triggers one re-seeding, then a
    merge to k-1 clusters.
    """
    feats = _rank_features(table, rows, columns)
    sketches = {c: _build_sketch(table, rows, c) for c in columns}
    n_distinct = len(np.unique(feats, axis=0))
    if n_distinct < k:
        return np.zeros(len(rows), dtype=int), feats.mean(axis=0)[None, :], sketches

    for attempt in range(2):
        km = KMeans(n_clusters=k, random_state=(seed + attempt) & 0x7FFFFFFF,
                    n_init=4)
        labels = km.fit_predict(feats)
        if len(np.unique(labels)) == k:
            return labels, km.cluster_centers_, sketches
    # merge: keep the nonempty clusters that did come back
    present = np.unique(labels)
    remap = {old: new for new, old in enumerate(present)}
    labels = np.array([remap[v] for v in labels])
    return labels, km.cluster_centers_[present], sketches


def _dependence_components(table: SampleTable, rows: np.ndarray, columns,
                           params: LearnParams, seed: int) -> list[list[str]]:
    """Connected components of the pairwise-dependence graph at the threshold."""
    rdc_params = RdcParams(num_features=params.rdc.num_features,
                           projection_scale=params.rdc.projection_scale,
                           seed=seed, sample_cap=params.rdc.sample_cap)
    sub = rows
    if len(sub) > rdc_params.sample_cap:
        rng = np.random.default_rng(seed)
        sub = sub[rng.choice(len(sub), size=rdc_params.sample_cap,
                             replace=False)]
    feats = []
    for col in columns:
        ranks = copula_ranks(table.data[col][sub], table.column(col).kind)
        feats.append(None if np.ptp(ranks) == 0.0
                     else _sine_features(ranks, rdc_params, col))
    m = len(columns)
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(m):
        for j in range(i + 1, m):
            if feats[i] is None or feats[j] is None:
                continue
            if find(i) == find(j):
                continue
            if _max_canonical_correlation(feats[i], feats[j]) >= params.rdc_threshold:
                parent[find(j)] = find(i)

    groups: dict[int, list[str]] = {}
    for i, col in enumerate(columns):
        groups.setdefault(find(i), []).append(col)
    return [groups[r] for r in sorted(groups, key=lambda r: columns.index(groups[r][0]))]


def _build(table: SampleTable, rows: np.ndarray, columns: list[str],
           params: LearnParams, n_total: int, path: str):
    if len(columns) == 1:
        return _fit_named_leaf(table, rows, columns[0], params)

    seed = _derive_seed(params.seed, path)
    components = _dependence_components(table, rows, columns, params, seed)
    if len(components) > 1:
        children = [_build(table, rows, comp, params, n_total, f"{path}/c{i}")
                    for i, comp in enumerate(components)]
        return ProductNode(children)

    if len(rows) < params.min_instance_fraction * n_total:
        return ProductNode([_fit_named_leaf(table, rows, c, params)
                            for c in columns])

    labels, centroids, sketches = cluster_rows(table, rows, columns,
                                               params.cluster_count, seed)
    n_clusters = len(np.unique(labels))
    if n_clusters < 2:
        return ProductNode([_fit_named_leaf(table, rows, c, params)
                            for c in columns])
    children, sizes = [], []
    for ci in range(n_clusters):
        sub = rows[labels == ci]
        children.append(_build(table, sub, columns, params, n_total,
                               f"{path}/s{ci}"))
        sizes.append(len(sub))
    return SumNode(children, sizes, columns, sketches, centroids[:n_clusters])


def learn_rspn(table: SampleTable, params: LearnParams = LearnParams(),
               scope: list[str] | None = None, rspn_id: str = "") -> Rspn:
    """Learn a model over the table's learned columns (or a given scope)."""
    if table.n_rows == 0:
        raise ValueError("cannot learn from an empty table")
    if scope is None:
        scope = table.learned_columns()
    if not scope:
        raise ValueError("empty scope: nothing to learn")

    rows = np.arange(table.n_rows)
    snapshot = _root_snapshot(table, scope, params)
    root = _build(table, rows, list(scope), params, table.n_rows, "r")
    kinds = {c: table.column(c).kind for c in scope}
    return Rspn(
        root=root,
        scope=frozenset(scope),
        table_set=frozenset(table.origin_tables),
        n_samples=table.n_rows,
        full_population_size=table.full_population_size,
        sample_rate=table.sample_rate,
        rdc_snapshot=snapshot,
        fd_dictionaries=list(table.fd_dictionaries),
        indicator_cols={t: c for t, c in table.indicator_cols.items()
                        if c in scope},
        factor_cols={k: c for k, c in table.factor_cols.items() if c in scope},
        join_factor_cols={k: c for k, c in table.join_factor_cols.items()
                          if c in scope},
        column_kinds=kinds,
        rspn_id=rspn_id or "_".join(table.origin_tables),
    )


def _root_snapshot(table: SampleTable, scope, params: LearnParams) -> RdcMatrix:
    from ..rdc import pairwise_rdc
    rdc_params = RdcParams(num_features=params.rdc.num_features,
                           projection_scale=params.rdc.projection_scale,
                           seed=params.seed, sample_cap=params.rdc.sample_cap)
    return pairwise_rdc(table, rdc_params, columns=list(scope))
