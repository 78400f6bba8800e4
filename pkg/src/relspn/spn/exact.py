"""Exact degenerate models: one mixture component per distinct row.

These models represent the empirical joint distribution of a small table
without any approximation, so every inference result equals a full scan.
They anchor the worked-example and oracle-equivalence tests and are also
a sensible choice for tiny dimension tables.
"""

from __future__ import annotations

import math

import numpy as np

from ..data import SampleTable
from ..rdc import RdcParams, pairwise_rdc
from .learn import fit_leaf
from .nodes import EcdfSketch, Leaf, ProductNode, Rspn, SumNode


def _point_leaf(column: str, kind: str, value, count: int) -> Leaf:
    null = value is None or (isinstance(value, float) and math.isnan(value))
    if null:
        values = np.array([], dtype=np.float64 if kind == "continuous" else object)
        counts = np.array([], dtype=np.int64)
        return Leaf(column, kind, values, counts, null_count=count)
    if kind == "continuous":
        values = np.array([float(value)], dtype=np.float64)
    else:
        values = np.array([value], dtype=object)
    return Leaf(column, kind, values, np.array([count], dtype=np.int64))


def build_exact_rspn(table: SampleTable, scope: list[str] | None = None,
                     rspn_id: str = "") -> Rspn:
    """Model the table exactly: a mixture over distinct rows of point leaves."""
    if scope is None:
        scope = table.learned_columns()
    if table.n_rows == 0:
        raise ValueError("cannot model an empty table")
    kinds = {c: table.column(c).kind for c in scope}

    rows: dict[tuple, int] = {}
    for i in range(table.n_rows):
        key = tuple(_canon(table.data[c][i]) for c in scope)
        rows[key] = rows.get(key, 0) + 1
    distinct = sorted(rows.items(), key=lambda kv: tuple(str(k) for k in kv[0]))

    if len(scope) == 1:
        root = fit_leaf(table.data[scope[0]], kinds[scope[0]])
    elif len(distinct) == 1:
        key, count = distinct[0]
        root = ProductNode([_point_leaf(c, kinds[c], v, count)
                            for c, v in zip(scope, key)])
    else:
        children = []
        sizes = []
        for key, count in distinct:
            children.append(ProductNode([_point_leaf(c, kinds[c], v, count)
                                         for c, v in zip(scope, key)]))
            sizes.append(count)
        sketches = {c: EcdfSketch(kinds[c], np.array([]), np.array([]))
                    for c in scope}
        centroids = np.zeros((len(children), len(scope)))
        root = SumNode(children, sizes, scope, sketches, centroids)

    snapshot = pairwise_rdc(table, RdcParams(), columns=scope) \
        if table.n_rows >= 2 else None
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
        rspn_id=rspn_id or ("exact:" + "_".join(table.origin_tables)),
    )


def _canon(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v
