"""Relational schema description: tables, foreign keys, functional dependencies.

A schema is declared in a JSON config file and loaded into a
:class:`SchemaGraph`, the join topology every other component navigates.
Config format::

    {
      "tables": [
        {"name": "customer",
         "csv": "customer.csv",
         "primary_key": "c_id",
         "columns": [
           {"name": "c_id", "kind": "continuous", "nullable": false},
           {"name": "c_age", "kind": "continuous"},
           {"name": "c_region", "kind": "categorical"}
         ]}
      ],
      "foreign_keys": [
        {"table": "order", "column": "c_id",
         "references": "customer", "referenced_column": "c_id"}
      ],
      "functional_dependencies": [
        {"table": "customer", "determinant": "c_zip", "dependent": "c_city"}
      ]
    }

Paths in ``csv`` are resolved relative to the config file location.
"""

from __future__ import annotations

import json
import logging
import os
from collections import deque
from dataclasses import dataclass, field

from .errors import SchemaError

logger = logging.getLogger(__name__)

COLUMN_KINDS = ("categorical", "continuous")


def qualify(table: str, column: str) -> str:
    """Fully qualified column name, used everywhere past ingestion."""
    return f"{table}.{column}"


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str
    nullable: bool = True

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")


@dataclass
class TableDef:
    name: str
    columns: list[ColumnMeta]
    primary_key: str
    csv_path: str | None = None
    row_count: int = 0

    def column(self, name: str) -> ColumnMeta:
        for col in self.columns:
            if col.name == name:
                return col
        raise SchemaError(f"table {self.name!r} has no column {name!r}")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass(frozen=True)
class ForeignKeyRel:
    referencing_table: str
    referencing_column: str
    referenced_table: str
    referenced_column: str

    @property
    def key(self) -> tuple[str, str, str]:
        """Stable identifier; one FK column references exactly one table."""
        return (self.referencing_table, self.referencing_column, self.referenced_table)

    def __str__(self) -> str:
        return (f"{self.referencing_table}.{self.referencing_column}"
                f"->{self.referenced_table}.{self.referenced_column}")


@dataclass
class FunctionalDependency:
    """Declared dependency A -> B between non-key columns of one table.

    The value dictionary is filled at ingestion time and maps each observed
    determinant value to its (unique) dependent value.
    """

    table: str
    determinant: str
    dependent: str
    dictionary: dict = field(default_factory=dict)


@dataclass
class SchemaGraph:
    tables: list[TableDef]
    fks: list[ForeignKeyRel]
    fds: list[FunctionalDependency] = field(default_factory=list)
    multi_component: bool = False

    def table(self, name: str) -> TableDef:
        for t in self.tables:
            if t.name == name:
                return t
        raise SchemaError(f"unknown table {name!r}")

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def fks_referencing(self, table: str) -> list[ForeignKeyRel]:
        """FK relationships whose primary-key side is ``table``."""
        return [fk for fk in self.fks if fk.referenced_table == table]

    def fks_from(self, table: str) -> list[ForeignKeyRel]:
        """FK relationships whose foreign-key side is ``table``."""
        return [fk for fk in self.fks if fk.referencing_table == table]

    def fks_between(self, t1: str, t2: str) -> list[ForeignKeyRel]:
        pair = {t1, t2}
        return [fk for fk in self.fks
                if {fk.referencing_table, fk.referenced_table} == pair]

    def fd_for(self, table: str) -> list[FunctionalDependency]:
        return [fd for fd in self.fds if fd.table == table]

    def is_connected(self, table_set) -> bool:
        table_set = set(table_set)
        if not table_set:
            return False
        seen = {next(iter(sorted(table_set)))}
        queue = deque(seen)
        while queue:
            t = queue.popleft()
            for fk in self.fks:
                if fk.referencing_table == t:
                    other = fk.referenced_table
                elif fk.referenced_table == t:
                    other = fk.referencing_table
                else:
                    continue
                if other in table_set and other not in seen:
                    seen.add(other)
                    queue.append(other)
        return seen == table_set

    def spanning_edges(self, table_set) -> list[ForeignKeyRel]:
        """Deterministic spanning tree of the FK subgraph over ``table_set``.

        BFS from the first table in declaration order; edges taken in
        declaration order. Raises if the subgraph is disconnected.
        """
        table_set = set(table_set)
        order = [t for t in self.table_names if t in table_set]
        if len(order) != len(table_set):
            missing = table_set - set(order)
            raise SchemaError(f"unknown tables in join set: {sorted(missing)}")
        seen = {order[0]}
        edges: list[ForeignKeyRel] = []
        queue = deque([order[0]])
        while queue:
            t = queue.popleft()
            for fk in self.fks:
                if fk.referencing_table == t and fk.referenced_table in table_set:
                    other = fk.referenced_table
                elif fk.referenced_table == t and fk.referencing_table in table_set:
                    other = fk.referencing_table
                else:
                    continue
                if other not in seen:
                    seen.add(other)
                    edges.append(fk)
                    queue.append(other)
        if seen != table_set:
            raise SchemaError(
                f"tables {sorted(table_set - seen)} are not FK-connected "
                f"to {sorted(seen)}")
        return edges

    def validate(self) -> None:
        names = self.table_names
        if len(set(names)) != len(names):
            raise SchemaError("duplicate table names in schema")
        for t in self.tables:
            if len(set(t.column_names)) != len(t.column_names):
                raise SchemaError(f"table {t.name!r}: duplicate column names")
            if t.primary_key not in t.column_names:
                raise SchemaError(
                    f"table {t.name!r}: primary key {t.primary_key!r} "
                    f"is not a declared column")
        for fk in self.fks:
            for tbl, col in ((fk.referencing_table, fk.referencing_column),
                             (fk.referenced_table, fk.referenced_column)):
                if tbl not in names:
                    raise SchemaError(f"dangling FK {fk}: unknown table {tbl!r}")
                self.table(tbl).column(col)
            if self.table(fk.referenced_table).primary_key != fk.referenced_column:
                raise SchemaError(
                    f"FK {fk}: referenced column must be the primary key of "
                    f"{fk.referenced_table!r}")
        for fd in self.fds:
            if fd.table not in names:
                raise SchemaError(
                    f"functional dependency on unknown table {fd.table!r}")
            tdef = self.table(fd.table)
            for col in (fd.determinant, fd.dependent):
                tdef.column(col)
            if fd.dependent == tdef.primary_key:
                raise SchemaError(
                    f"functional dependency {fd.table}.{fd.determinant}->"
                    f"{fd.dependent}: dependent may not be the primary key")
        if len(names) > 1 and not self.is_connected(names):
            self.multi_component = True
            logger.warning("schema FK graph is not connected; "
                           "joins across components will be rejected")


def load_schema(config_file: str) -> SchemaGraph:
    """Load and validate a schema config; checks that all CSV files exist."""
    if not os.path.exists(config_file):
        raise SchemaError(f"schema config not found: {config_file}")
    with open(config_file, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema config is not valid JSON: {exc}") from exc

    base_dir = os.path.dirname(os.path.abspath(config_file))
    tables = []
    for traw in raw.get("tables", []):
        try:
            cols = [ColumnMeta(c["name"], c["kind"], bool(c.get("nullable", True)))
                    for c in traw["columns"]]
            tdef = TableDef(name=traw["name"], columns=cols,
                            primary_key=traw["primary_key"],
                            csv_path=traw.get("csv"))
        except KeyError as exc:
            raise SchemaError(f"table entry missing key {exc} in config") from exc
        if tdef.csv_path is not None and not os.path.isabs(tdef.csv_path):
            tdef.csv_path = os.path.join(base_dir, tdef.csv_path)
        tables.append(tdef)

    fks = []
    for fraw in raw.get("foreign_keys", []):
        try:
            fks.append(ForeignKeyRel(
                referencing_table=fraw["table"],
                referencing_column=fraw["column"],
                referenced_table=fraw["references"],
                referenced_column=fraw["referenced_column"]))
        except KeyError as exc:
            raise SchemaError(f"foreign key entry missing key {exc}") from exc

    fds = [FunctionalDependency(table=fraw["table"],
                                determinant=fraw["determinant"],
                                dependent=fraw["dependent"])
           for fraw in raw.get("functional_dependencies", [])]

    schema = SchemaGraph(tables=tables, fks=fks, fds=fds)
    schema.validate()
    for t in schema.tables:
        if t.csv_path is not None and not os.path.exists(t.csv_path):
            raise SchemaError(f"table {t.name!r}: CSV file not found: {t.csv_path}")
    return schema
