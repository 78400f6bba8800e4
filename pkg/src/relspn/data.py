"""Column-store tables, CSV ingestion, tuple factors and outer-join samples.

All tables past ingestion are :class:`SampleTable` instances: immutable
column stores with fully qualified column names (``table.column``).
Continuous columns are float64 arrays with NaN as the NULL sentinel;
categorical columns are object arrays with ``None`` as the NULL sentinel.
Both sentinels are out-of-domain: no comparison operator ever matches them.

Synthetic columns:

* tuple factor ``F``: on the primary-key side of an FK relationship, the
  number of matching foreign-key-side rows (``>= 0``);
* join tuple factor: the same quantity inside a full outer join, with
  zeros replaced by one (``>= 1``), since the padded tuple still occupies
  one join row;
* presence indicator: per member table of a join, 1 where the row carries
  a real tuple of that table and 0 where it is NULL padding.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, SchemaError
from .schema import (ColumnMeta, ForeignKeyRel, FunctionalDependency,
                     SchemaGraph, TableDef, qualify)

logger = logging.getLogger(__name__)

DEFAULT_MAX_JOIN_ROWS = 10_000_000
JOIN_SIZE_LIMIT = 50_000_000

FkKey = tuple[str, str, str]


def factor_column(fk: ForeignKeyRel) -> str:
    """Name of the raw tuple-factor column, stored on the referenced table."""
    return qualify(fk.referenced_table,
                   f"__tf_{fk.referencing_table}_{fk.referencing_column}")


def join_factor_column(fk: ForeignKeyRel) -> str:
    """Name of the join-side tuple-factor column (values >= 1)."""
    return qualify(fk.referenced_table,
                   f"__tf1_{fk.referencing_table}_{fk.referencing_column}")


def indicator_column(table: str) -> str:
    """Name of the presence-indicator column of ``table`` inside a join."""
    return qualify(table, "__nn")


def null_mask(arr: np.ndarray, kind: str) -> np.ndarray:
    if kind == "continuous":
        return np.isnan(arr)
    return np.fromiter((v is None for v in arr), dtype=bool, count=len(arr))


@dataclass
class SampleTable:
    """A materialized (possibly sampled) table or full outer join."""

    origin_tables: tuple[str, ...]
    columns: list[ColumnMeta]                    # names are qualified
    data: dict[str, np.ndarray]
    sample_rate: float = 1.0
    full_population_size: float = 0.0            # exact |T| or |J|
    key_columns: set[str] = field(default_factory=set)
    indicator_cols: dict[str, str] = field(default_factory=dict)      # table -> col
    factor_cols: dict[FkKey, str] = field(default_factory=dict)       # fk -> raw F col
    join_factor_cols: dict[FkKey, str] = field(default_factory=dict)  # fk -> F' col
    fd_dictionaries: list[FunctionalDependency] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        if not self.data:
            return 0
        return len(next(iter(self.data.values())))

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> ColumnMeta:
        for c in self.columns:
            if c.name == name:
                return c
        raise DataError(f"no column {name!r} in table over {self.origin_tables}")

    @property
    def synthetic_columns(self) -> set[str]:
        cols = set(self.indicator_cols.values())
        cols.update(self.factor_cols.values())
        cols.update(self.join_factor_cols.values())
        return cols

    def learned_columns(self) -> list[str]:
        """Columns a model is fit on: everything but key (id) columns."""
        return [c.name for c in self.columns if c.name not in self.key_columns]

    def subsample(self, max_rows: int, seed: int) -> SampleTable:
        """Uniform row sample without replacement; identity if small enough."""
        n = self.n_rows
        if n <= max_rows:
            return self
        idx = np.sort(np.random.default_rng(seed).choice(n, size=max_rows,
                                                         replace=False))
        data = {name: arr[idx] for name, arr in self.data.items()}
        return replace(self, data=data,
                       sample_rate=self.sample_rate * max_rows / n)


def _make_column_array(kind: str, n: int) -> np.ndarray:
    if kind == "continuous":
        return np.full(n, np.nan, dtype=np.float64)
    return np.full(n, None, dtype=object)


def ingest_table(csv_path: str, table_def: TableDef) -> SampleTable:
    """Parse one CSV into a SampleTable, validating kinds and the primary key.

    Header must contain exactly the declared column names (any order).
    Empty fields become NULL; a NULL in a non-nullable column is an error.
    """
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{csv_path}: empty file (header row required)")
        declared = set(table_def.column_names)
        if set(header) != declared:
            raise DataError(
                f"{csv_path}: header {header} does not match declared columns "
                f"{sorted(declared)} of table {table_def.name!r}")
        rows = list(reader)

    n = len(rows)
    arrays: dict[str, np.ndarray] = {}
    for j, col_name in enumerate(header):
        meta = table_def.column(col_name)
        arr = _make_column_array(meta.kind, n)
        for i, row in enumerate(rows):
            if j >= len(row):
                raise DataError(f"{csv_path}: row {i + 2} has too few fields")
            raw = row[j]
            if raw == "":
                if not meta.nullable:
                    raise DataError(
                        f"{csv_path}: row {i + 2}, column {col_name!r}: "
                        f"NULL in non-nullable column")
                continue
            if meta.kind == "continuous":
                try:
                    arr[i] = float(raw)
                except ValueError:
                    raise DataError(
                        f"{csv_path}: row {i + 2}, column {col_name!r}: "
                        f"cannot parse {raw!r} as a number")
            else:
                arr[i] = raw
        arrays[qualify(table_def.name, col_name)] = arr

    pk_col = qualify(table_def.name, table_def.primary_key)
    pk_arr = arrays[pk_col]
    pk_kind = table_def.column(table_def.primary_key).kind
    if null_mask(pk_arr, pk_kind).any():
        raise DataError(f"{csv_path}: NULL primary key in table {table_def.name!r}")
    seen: set = set()
    for v in pk_arr:
        if v in seen:
            raise DataError(
                f"{csv_path}: duplicate primary key {v!r} in table "
                f"{table_def.name!r}")
        seen.add(v)

    table_def.row_count = n
    columns = [ColumnMeta(qualify(table_def.name, c.name), c.kind, c.nullable)
               for c in table_def.columns]
    keys = {pk_col}
    return SampleTable(origin_tables=(table_def.name,), columns=columns,
                       data=arrays, sample_rate=1.0, full_population_size=n,
                       key_columns=keys)


def compute_tuple_factors(schema: SchemaGraph,
                          tables: dict[str, SampleTable]) -> None:
    """Add the raw tuple-factor column for every FK relationship.

    For relationship P.fk -> S.pk the referenced table S gains an integer
    column counting matching P rows, computed by exact grouping. Also
    verifies referential integrity and marks FK columns as key columns.
    """
    for fk in schema.fks:
        ref_table = tables[fk.referencing_table]
        refd_table = tables[fk.referenced_table]
        fk_col = qualify(fk.referencing_table, fk.referencing_column)
        pk_col = qualify(fk.referenced_table, fk.referenced_column)
        fk_kind = ref_table.column(fk_col).kind
        pk_arr = refd_table.data[pk_col]

        counts: dict = {}
        nulls = null_mask(ref_table.data[fk_col], fk_kind)
        for v in ref_table.data[fk_col][~nulls]:
            counts[v] = counts.get(v, 0) + 1

        pk_values = set(pk_arr.tolist())
        dangling = [v for v in counts if v not in pk_values]
        if dangling:
            raise SchemaError(
                f"referential integrity violated: {fk_col} value "
                f"{dangling[0]!r} has no match in {pk_col}")

        col_name = factor_column(fk)
        factors = np.array([float(counts.get(v, 0)) for v in pk_arr],
                           dtype=np.float64)
        refd_table.data[col_name] = factors
        refd_table.columns.append(ColumnMeta(col_name, "continuous", False))
        refd_table.factor_cols[fk.key] = col_name
        ref_table.key_columns.add(fk_col)


def apply_fd_projection(table: SampleTable,
                        fds: list[FunctionalDependency]) -> SampleTable:
    """Remove FD-dependent columns from the learning view.

    The determinant->dependent dictionary is retained so predicates on the
    removed column can be rewritten later. An FD contradicted by the data
    (two dependent values for one determinant value) is dropped with a
    warning and both columns stay.
    """
    if not fds:
        return table
    drop: set[str] = set()
    kept_fds: list[FunctionalDependency] = []
    for fd in fds:
        det = qualify(fd.table, fd.determinant)
        dep = qualify(fd.table, fd.dependent)
        if det not in table.data or dep not in table.data:
            raise SchemaError(
                f"functional dependency {det}->{dep}: column not found")
        det_kind = table.column(det).kind
        det_arr, dep_arr = table.data[det], table.data[dep]
        mapping: dict = {}
        violated = False
        nulls = null_mask(det_arr, det_kind)
        for i in range(len(det_arr)):
            if nulls[i]:
                continue
            a, b = det_arr[i], dep_arr[i]
            if a in mapping:
                prev = mapping[a]
                same = (prev is b or prev == b or
                        (isinstance(prev, float) and isinstance(b, float)
                         and math.isnan(prev) and math.isnan(b)))
                if not same:
                    violated = True
                    break
            else:
                mapping[a] = b
        if violated:
            logger.warning("functional dependency %s->%s violated by data; "
                           "keeping both columns", det, dep)
            continue
        kept_fds.append(FunctionalDependency(fd.table, det, dep, mapping))
        drop.add(dep)

    if not kept_fds:
        return table
    columns = [c for c in table.columns if c.name not in drop]
    data = {k: v for k, v in table.data.items() if k not in drop}
    return replace(table, columns=columns, data=data,
                   fd_dictionaries=table.fd_dictionaries + kept_fds)


def _pad_value(table: SampleTable, col: ColumnMeta) -> object:
    """Fill value for rows where the column's origin table is absent."""
    if col.name in table.join_factor_cols.values():
        return 1.0
    if col.name in table.indicator_cols.values():
        return 0.0
    return np.nan if col.kind == "continuous" else None


def _gather(arr: np.ndarray, idx: np.ndarray, pad) -> np.ndarray:
    """arr[idx] with idx == -1 producing the pad value."""
    out = arr[np.clip(idx, 0, None)]
    missing = idx < 0
    if missing.any():
        out = out.copy()
        out[missing] = pad
    return out


class _JoinState:
    """Accumulator for the left-deep full outer join."""

    def __init__(self, start: SampleTable):
        self.columns = list(start.columns)
        self.data = dict(start.data)
        self.key_columns = set(start.key_columns)
        self.factor_cols = dict(start.factor_cols)
        self.join_factor_cols = dict(start.join_factor_cols)
        n = start.n_rows
        self.indicator_cols: dict[str, str] = {}
        for t in start.origin_tables:
            ind = indicator_column(t)
            self.indicator_cols[t] = ind
            self.data[ind] = np.ones(n, dtype=np.float64)
            self.columns.append(ColumnMeta(ind, "continuous", False))

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.data.values())))

    def take(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        for col in self.columns:
            pad = _pad_value_state(self, col)
            out[col.name] = _gather(self.data[col.name], idx, pad)
        return out


def _pad_value_state(state: _JoinState, col: ColumnMeta) -> object:
    if col.name in state.join_factor_cols.values():
        return 1.0
    if col.name in state.indicator_cols.values():
        return 0.0
    return np.nan if col.kind == "continuous" else None


def _attach(state: _JoinState, new: SampleTable, fk: ForeignKeyRel,
            new_is_referencing: bool) -> None:
    """Full-outer-join one more table onto the accumulated join.

    ``new_is_referencing``: the incoming table holds the FK column (its rows
    each have at most one partner in the accumulated side); otherwise the
    incoming table is the referenced one (accumulated rows each have at most
    one partner in it).
    """
    new_table = new.origin_tables[0]
    fk_col = qualify(fk.referencing_table, fk.referencing_column)
    pk_col = qualify(fk.referenced_table, fk.referenced_column)
    raw_factor = factor_column(fk)

    if new_is_referencing:
        # accumulated side carries the referenced table's pk
        anchor_arr = state.data[pk_col]
        anchor_kind = next(c.kind for c in state.columns if c.name == pk_col)
        partners: dict = {}
        new_fk_arr = new.data[fk_col]
        new_fk_kind = new.column(fk_col).kind
        new_nulls = null_mask(new_fk_arr, new_fk_kind)
        for i in range(len(new_fk_arr)):
            if not new_nulls[i]:
                partners.setdefault(new_fk_arr[i], []).append(i)

        anchor_nulls = null_mask(anchor_arr, anchor_kind)
        left_idx: list[np.ndarray] = []
        right_idx: list[np.ndarray] = []
        for i in range(len(anchor_arr)):
            if anchor_nulls[i]:
                left_idx.append(np.array([i]))
                right_idx.append(np.array([-1]))
                continue
            p = partners.get(anchor_arr[i])
            if p is None:
                left_idx.append(np.array([i]))
                right_idx.append(np.array([-1]))
            else:
                left_idx.append(np.full(len(p), i))
                right_idx.append(np.array(p))
        # referencing rows with NULL fk have no partner anywhere: pad the
        # whole accumulated side
        orphan = np.nonzero(new_nulls)[0]
        if len(orphan):
            left_idx.append(np.full(len(orphan), -1))
            right_idx.append(orphan)
        lidx = np.concatenate(left_idx).astype(np.int64)
        ridx = np.concatenate(right_idx).astype(np.int64)
    else:
        # accumulated side carries the fk column; incoming table is referenced
        anchor_arr = state.data[fk_col]
        anchor_kind = next(c.kind for c in state.columns if c.name == fk_col)
        pk_pos: dict = {}
        new_pk_arr = new.data[pk_col]
        for i, v in enumerate(new_pk_arr):
            pk_pos[v] = i
        anchor_nulls = null_mask(anchor_arr, anchor_kind)
        ridx_arr = np.full(len(anchor_arr), -1, dtype=np.int64)
        matched = np.zeros(len(new_pk_arr), dtype=bool)
        for i in range(len(anchor_arr)):
            if anchor_nulls[i]:
                continue
            j = pk_pos.get(anchor_arr[i])
            if j is not None:
                ridx_arr[i] = j
                matched[j] = True
        lidx = np.arange(len(anchor_arr), dtype=np.int64)
        ridx = ridx_arr
        unmatched = np.nonzero(~matched)[0]
        if len(unmatched):
            lidx = np.concatenate([lidx, np.full(len(unmatched), -1)])
            ridx = np.concatenate([ridx, unmatched])

    if len(lidx) > JOIN_SIZE_LIMIT:
        raise DataError(
            f"join over {state.indicator_cols.keys() | {new_table}} exceeds "
            f"{JOIN_SIZE_LIMIT} rows")

    out = state.take(lidx)
    for col in new.columns:
        pad = _pad_value(new, col)
        out[col.name] = _gather(new.data[col.name], ridx, pad)
    new_ind = indicator_column(new_table)
    out[new_ind] = (ridx >= 0).astype(np.float64)

    columns = list(state.columns)
    for col in new.columns:
        columns.append(col)
    columns.append(ColumnMeta(new_ind, "continuous", False))

    # the edge's raw factor becomes a join factor: zeros (and pads) -> 1
    jf_col = join_factor_column(fk)
    raw = out.pop(raw_factor)
    jf = np.where(np.isnan(raw) | (raw < 1.0), 1.0, raw)
    out[jf_col] = jf
    columns = [c for c in columns if c.name != raw_factor]
    columns.append(ColumnMeta(jf_col, "continuous", False))

    state.columns = columns
    state.data = out
    state.key_columns.update(new.key_columns)
    state.indicator_cols[new_table] = new_ind
    state.factor_cols.update(new.factor_cols)
    state.factor_cols = {k: v for k, v in state.factor_cols.items()
                         if v != raw_factor}
    state.join_factor_cols.update(new.join_factor_cols)
    state.join_factor_cols[fk.key] = jf_col


def full_outer_join_sample(schema: SchemaGraph, tables: dict[str, SampleTable],
                           table_set, max_rows: int = DEFAULT_MAX_JOIN_ROWS,
                           seed: int = 0) -> SampleTable:
    """Materialize the full outer join of ``table_set`` along FK edges.

    Adds per-table presence indicators and converts the join edges' tuple
    factors to their >=1 variants. If the join exceeds ``max_rows``, a
    seeded uniform sample is kept; the exact unsampled row count is always
    recorded as the population size.
    """
    table_set = set(table_set)
    if len(table_set) < 2:
        raise SchemaError("a join needs at least two distinct tables")
    for t in table_set:
        if t not in tables:
            raise SchemaError(f"table {t!r} has not been ingested")
        if tables[t].sample_rate != 1.0:
            raise SchemaError(f"table {t!r}: joins must start from full tables")
    edges = schema.spanning_edges(table_set)

    order = [t for t in schema.table_names if t in table_set]
    state = _JoinState(tables[order[0]])
    joined = {order[0]}
    pending = list(edges)
    while pending:
        progressed = False
        for fk in list(pending):
            if fk.referencing_table in joined and fk.referenced_table not in joined:
                _attach(state, tables[fk.referenced_table], fk,
                        new_is_referencing=False)
                joined.add(fk.referenced_table)
            elif fk.referenced_table in joined and fk.referencing_table not in joined:
                _attach(state, tables[fk.referencing_table], fk,
                        new_is_referencing=True)
                joined.add(fk.referencing_table)
            else:
                continue
            pending.remove(fk)
            progressed = True
        if not progressed:  # pragma: no cover - spanning_edges guarantees progress
            raise SchemaError("internal error: join edges do not connect")

    full_size = state.n_rows
    result = SampleTable(
        origin_tables=tuple(order),
        columns=state.columns,
        data=state.data,
        sample_rate=1.0,
        full_population_size=float(full_size),
        key_columns=state.key_columns,
        indicator_cols=state.indicator_cols,
        factor_cols=state.factor_cols,
        join_factor_cols=state.join_factor_cols,
    )
    if full_size > max_rows:
        result = result.subsample(max_rows, seed)
    return result
