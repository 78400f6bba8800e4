"""Randomized dependence between columns.

The coefficient is computed as the largest canonical correlation between
random nonlinear projections of the empirical copula transforms of the
two columns:

1. each value is replaced by its normalized average rank in [0, 1]
   (categorical values ranked lexicographically, NULLs as their own tied
   group below all values);
2. a constant-1 coordinate is appended;
3. the result is projected through ``k`` random linear maps with
   zero-mean normal weights of variance ``s`` and passed through ``sin``;
4. the largest canonical correlation between the two feature blocks is
   returned, clamped to [0, 1].

Projections are seeded per (seed, column id), so the value is symmetric
in its arguments and deterministic.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import SampleTable, null_mask

RIDGE = 1e-9


@dataclass(frozen=True)
class RdcParams:
    num_features: int = 20
    projection_scale: float = 1.0 / 6.0
    seed: int = 0
    sample_cap: int = 10_000

    def __post_init__(self):
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")
        if self.sample_cap < 2:
            raise ValueError("sample_cap must be >= 2")


@dataclass
class RdcMatrix:
    columns: tuple[str, ...]
    values: np.ndarray

    def get(self, c1: str, c2: str) -> float:
        i, j = self.columns.index(c1), self.columns.index(c2)
        return float(self.values[i, j])

    def has(self, col: str) -> bool:
        return col in self.columns


def _column_seed(seed: int, column_id: str) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF,
                                  zlib.crc32(column_id.encode("utf-8"))])


def copula_ranks(values: np.ndarray, kind: str) -> np.ndarray:
    """Normalized average ranks in (0, 1]; NULLs form the lowest tied group."""
    n = len(values)
    nulls = null_mask(values, kind)
    k = int(nulls.sum())
    ranks = np.empty(n, dtype=np.float64)
    if k:
        ranks[nulls] = (k + 1) / 2.0
    nn = values[~nulls]
    if len(nn):
        if kind == "categorical":
            # lexicographic order on the string form is a valid fixed total order
            _, codes = np.unique(np.array([str(v) for v in nn]),
                                 return_inverse=True)
            r = rankdata(codes, method="average")
        else:
            r = rankdata(nn.astype(np.float64), method="average")
        ranks[~nulls] = r + k
    return ranks / n


def _sine_features(ranks: np.ndarray, params: RdcParams,
                   column_id: str) -> np.ndarray:
    rng = _column_seed(params.seed, column_id)
    w = rng.normal(0.0, np.sqrt(params.projection_scale),
                   size=(2, params.num_features))
    # the appended constant-1 coordinate turns the second weight row into a phase
    return np.sin(np.outer(ranks, w[0]) + w[1])


def _max_canonical_correlation(fx: np.ndarray, fy: np.ndarray) -> float:
    n = fx.shape[0]
    if n < 2:
        return 0.0
    fx = fx - fx.mean(axis=0)
    fy = fy - fy.mean(axis=0)
    cxx = fx.T @ fx / (n - 1) + RIDGE * np.eye(fx.shape[1])
    cyy = fy.T @ fy / (n - 1) + RIDGE * np.eye(fy.shape[1])
    cxy = fx.T @ fy / (n - 1)
    try:
        m = np.linalg.solve(cxx, cxy) @ np.linalg.solve(cyy, cxy.T)
        eigvals = np.linalg.eigvals(m)
    except np.linalg.LinAlgError:
        return 0.0
    lam = float(np.max(eigvals.real)) if len(eigvals) else 0.0
    if not np.isfinite(lam):
        return 0.0
    return float(np.sqrt(min(max(lam, 0.0), 1.0)))


def _subsample_idx(n: int, params: RdcParams) -> np.ndarray | None:
    if n <= params.sample_cap:
        return None
    rng = np.random.default_rng([params.seed & 0xFFFFFFFF, n])
    return rng.choice(n, size=params.sample_cap, replace=False)


def rdc(x: np.ndarray, y: np.ndarray, params: RdcParams = RdcParams(),
        x_kind: str = "continuous", y_kind: str = "continuous",
        x_id: str = "x", y_id: str = "y") -> float:
    """Dependence in [0, 1] between two paired columns.

    Constant columns (no measurable dependence) yield 0. Deterministic
    given the seed; symmetric under argument swap.
    """
    x, y = np.asarray(x), np.asarray(y)
    if len(x) != len(y):
        raise ValueError(f"paired columns differ in length: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least two paired rows")
    idx = _subsample_idx(len(x), params)
    if idx is not None:
        x, y = x[idx], y[idx]
    rx = copula_ranks(x, x_kind)
    ry = copula_ranks(y, y_kind)
    if np.ptp(rx) == 0.0 or np.ptp(ry) == 0.0:
        return 0.0
    fx = _sine_features(rx, params, x_id)
    fy = _sine_features(ry, params, y_id)
    return _max_canonical_correlation(fx, fy)


def pairwise_rdc(table: SampleTable, params: RdcParams = RdcParams(),
                 columns: list[str] | None = None) -> RdcMatrix:
    """Symmetric dependence matrix over the table's learned columns.

    Computed on a row sample of at most ``sample_cap`` rows; diagonal
    entries are 1 by convention.
    """
    if columns is None:
        columns = table.learned_columns()
    if table.n_rows == 0:
        raise ValueError("cannot compute dependence on an empty table")
    idx = _subsample_idx(table.n_rows, params)
    feats: list[np.ndarray | None] = []
    for col in columns:
        arr = table.data[col]
        if idx is not None:
            arr = arr[idx]
        ranks = copula_ranks(arr, table.column(col).kind)
        feats.append(None if np.ptp(ranks) == 0.0
                     else _sine_features(ranks, params, col))
    m = len(columns)
    values = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            if feats[i] is None or feats[j] is None:
                v = 0.0
            else:
                v = _max_canonical_correlation(feats[i], feats[j])
            values[i, j] = values[j, i] = v
    return RdcMatrix(columns=tuple(columns), values=values)


def table_dependency(t1: str, t2: str, joined: SampleTable,
                     params: RdcParams = RdcParams()) -> float:
    """Maximum dependence between any data column of t1 and any of t2.

    Synthetic columns are excluded: presence indicators and tuple factors
    correlate with the join structure itself, not with the data.
    """
    synthetic = joined.synthetic_columns
    cols1 = [c for c in joined.learned_columns()
             if c.startswith(t1 + ".") and c not in synthetic]
    cols2 = [c for c in joined.learned_columns()
             if c.startswith(t2 + ".") and c not in synthetic]
    if not cols1 or not cols2:
        return 0.0
    idx = _subsample_idx(joined.n_rows, params)
    best = 0.0
    feats: dict[str, np.ndarray | None] = {}
    for col in cols1 + cols2:
        arr = joined.data[col]
        if idx is not None:
            arr = arr[idx]
        ranks = copula_ranks(arr, joined.column(col).kind)
        feats[col] = (None if np.ptp(ranks) == 0.0
                      else _sine_features(ranks, params, col))
    for c1 in cols1:
        for c2 in cols2:
            if feats[c1] is None or feats[c2] is None:
                continue
            best = max(best, _max_canonical_correlation(feats[c1], feats[c2]))
    return best
