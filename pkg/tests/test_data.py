import math

import numpy as np
import pytest

from relspn.data import (apply_fd_projection, compute_tuple_factors,
                         factor_column, full_outer_join_sample,
                         indicator_column, ingest_table, join_factor_column)
from relspn.errors import DataError, SchemaError
from relspn.schema import (ColumnMeta, FunctionalDependency, SchemaGraph,
                           TableDef, ForeignKeyRel)


def brute_force_full_outer_join(customers, orders):
    """Independent oracle: row-at-a-time two-table full outer join."""
    rows = []
    matched_orders = set()
    for c in customers:
        partners = [i for i, o in enumerate(orders) if o["c_id"] == c["c_id"]]
        if not partners:
            rows.append({**c, "o_id": None, "o_channel": None})
        for i in partners:
            matched_orders.add(i)
            rows.append({**c, "o_id": orders[i]["o_id"],
                         "o_channel": orders[i]["o_channel"]})
    for i, o in enumerate(orders):
        if i not in matched_orders:
            rows.append({"c_id": None, "c_age": None, "c_region": None,
                         "o_id": o["o_id"], "o_channel": o["o_channel"]})
    return rows


def test_ingest_counts_and_nulls(toy_tables):
    cust = toy_tables["customer"]
    assert cust.n_rows == 3
    assert cust.full_population_size == 3
    assert list(cust.data["customer.c_age"]) == [20.0, 50.0, 80.0]


def test_ingest_empty_csv(tmp_path, toy_schema):
    path = tmp_path / "empty.csv"
    path.write_text("c_id,c_age,c_region\n")
    table = ingest_table(str(path), toy_schema.table("customer"))
    assert table.n_rows == 0


def test_ingest_null_sentinel(tmp_path, toy_schema):
    path = tmp_path / "nulls.csv"
    path.write_text("c_id,c_age,c_region\n1,,EUROPE\n2,30,\n")
    table = ingest_table(str(path), toy_schema.table("customer"))
    assert math.isnan(table.data["customer.c_age"][0])
    assert table.data["customer.c_region"][1] is None


def test_ingest_duplicate_pk(tmp_path, toy_schema):
    path = tmp_path / "dup.csv"
    path.write_text("c_id,c_age,c_region\n1,20,EUROPE\n1,30,ASIA\n")
    with pytest.raises(DataError, match="duplicate primary key"):
        ingest_table(str(path), toy_schema.table("customer"))


def test_ingest_parse_failure_reports_position(tmp_path, toy_schema):
    path = tmp_path / "bad.csv"
    path.write_text("c_id,c_age,c_region\n1,twenty,EUROPE\n")
    with pytest.raises(DataError, match="row 2.*c_age"):
        ingest_table(str(path), toy_schema.table("customer"))


def test_tuple_factors_match_worked_example(toy_schema, toy_tables):
    fk = toy_schema.fks[0]
    col = factor_column(fk)
    factors = toy_tables["customer"].data[col]
    assert list(factors) == [2.0, 0.0, 2.0]


def test_tuple_factors_sum_to_referencing_rows(toy_schema, toy_tables):
    fk = toy_schema.fks[0]
    col = factor_column(fk)
    assert toy_tables["customer"].data[col].sum() == toy_tables["order"].n_rows


def test_full_outer_join_worked_example(toy_schema, toy_join):
    fk = toy_schema.fks[0]
    assert toy_join.n_rows == 5
    assert toy_join.full_population_size == 5
    n_c = toy_join.data[indicator_column("customer")]
    n_o = toy_join.data[indicator_column("order")]
    assert n_c.sum() == 5          # every join row carries a real customer
    assert n_o.sum() == 4          # |order| rows carry a real order
    jf = toy_join.data[join_factor_column(fk)]
    assert jf.min() == 1.0 and jf.max() == 2.0
    # customer 2's row: order side padded, factor clamped to 1
    row = int(np.nonzero(toy_join.data["customer.c_id"] == 2.0)[0][0])
    assert n_o[row] == 0.0
    assert math.isnan(toy_join.data["order.o_id"][row])
    assert jf[row] == 1.0


def test_join_matches_brute_force(toy_schema, toy_tables, toy_join):
    customers = [{"c_id": i + 1, "c_age": a, "c_region": r}
                 for i, (a, r) in enumerate([(20, "EUROPE"), (50, "EUROPE"),
                                             (80, "ASIA")])]
    orders = [{"o_id": 1, "c_id": 1, "o_channel": "ONLINE"},
              {"o_id": 2, "c_id": 1, "o_channel": "STORE"},
              {"o_id": 3, "c_id": 3, "o_channel": "ONLINE"},
              {"o_id": 4, "c_id": 3, "o_channel": "STORE"}]
    expected = brute_force_full_outer_join(customers, orders)

    def canon(rows):
        out = []
        for r in rows:
            out.append(tuple((None if (isinstance(v, float) and math.isnan(v))
                              else v) for v in r))
        return sorted(out, key=str)

    got = []
    for i in range(toy_join.n_rows):
        got.append((toy_join.data["customer.c_id"][i],
                    toy_join.data["customer.c_age"][i],
                    toy_join.data["customer.c_region"][i],
                    toy_join.data["order.o_id"][i],
                    toy_join.data["order.o_channel"][i]))
    want = [(r["c_id"], r["c_age"], r["c_region"], r["o_id"], r["o_channel"])
            for r in expected]
    assert canon(got) == canon(want)


def test_join_population_identity(toy_schema, toy_tables, toy_join):
    # |J| = |referencing| + #referenced rows with factor 0
    fk = toy_schema.fks[0]
    factors = toy_tables["customer"].data[factor_column(fk)]
    expected = toy_tables["order"].n_rows + int((factors == 0).sum())
    assert toy_join.full_population_size == expected


def test_join_sampling_reproduces_exact_join(toy_schema, toy_tables):
    exact = full_outer_join_sample(toy_schema, toy_tables,
                                   {"customer", "order"}, max_rows=100, seed=1)
    assert exact.n_rows == 5
    assert exact.sample_rate == 1.0


def test_join_sampling_caps_rows(toy_schema, toy_tables):
    sampled = full_outer_join_sample(toy_schema, toy_tables,
                                     {"customer", "order"}, max_rows=3, seed=1)
    assert sampled.n_rows == 3
    assert sampled.full_population_size == 5
    assert sampled.sample_rate == pytest.approx(3 / 5)


def test_join_requires_two_tables(toy_schema, toy_tables):
    with pytest.raises(SchemaError, match="two distinct tables"):
        full_outer_join_sample(toy_schema, toy_tables, {"customer"})


def test_every_pk_matched_once(tmp_path):
    # 1:1 relationship: |J| = |referencing table| and all indicators 1
    schema = SchemaGraph(
        tables=[
            TableDef("a", [ColumnMeta("a_id", "continuous", False),
                           ColumnMeta("x", "continuous")], "a_id"),
            TableDef("b", [ColumnMeta("b_id", "continuous", False),
                           ColumnMeta("a_id", "continuous")], "b_id"),
        ],
        fks=[ForeignKeyRel("b", "a_id", "a", "a_id")])
    schema.validate()
    a_csv = tmp_path / "a.csv"
    a_csv.write_text("a_id,x\n1,10\n2,20\n")
    b_csv = tmp_path / "b.csv"
    b_csv.write_text("b_id,a_id\n1,1\n2,2\n")
    tables = {"a": ingest_table(str(a_csv), schema.table("a")),
              "b": ingest_table(str(b_csv), schema.table("b"))}
    compute_tuple_factors(schema, tables)
    fk = schema.fks[0]
    assert list(tables["a"].data[factor_column(fk)]) == [1.0, 1.0]
    join = full_outer_join_sample(schema, tables, {"a", "b"})
    assert join.n_rows == 2
    assert join.data[indicator_column("a")].sum() == 2
    assert join.data[indicator_column("b")].sum() == 2


def test_referential_integrity_enforced(tmp_path, toy_schema):
    cust = tmp_path / "customer.csv"
    cust.write_text("c_id,c_age,c_region\n1,20,EUROPE\n")
    orders = tmp_path / "order.csv"
    orders.write_text("o_id,c_id,o_channel\n1,9,ONLINE\n")
    tables = {"customer": ingest_table(str(cust), toy_schema.table("customer")),
              "order": ingest_table(str(orders), toy_schema.table("order"))}
    with pytest.raises(SchemaError, match="referential integrity"):
        compute_tuple_factors(toy_schema, tables)


def test_fd_projection_removes_dependent(tmp_path):
    tdef = TableDef("t", [ColumnMeta("id", "continuous", False),
                          ColumnMeta("zip", "categorical"),
                          ColumnMeta("city", "categorical")], "id")
    csv = tmp_path / "t.csv"
    csv.write_text("id,zip,city\n1,10115,berlin\n2,10115,berlin\n3,80331,munich\n")
    table = ingest_table(str(csv), tdef)
    fd = FunctionalDependency("t", "zip", "city")
    projected = apply_fd_projection(table, [fd])
    assert "t.city" not in projected.data
    assert projected.fd_dictionaries[0].dictionary == {"10115": "berlin",
                                                       "80331": "munich"}
    # original table untouched
    assert "t.city" in table.data


def test_fd_projection_no_fds_is_identity(toy_tables):
    table = toy_tables["customer"]
    assert apply_fd_projection(table, []) is table


def test_fd_projection_contradiction_keeps_columns(tmp_path):
    tdef = TableDef("t", [ColumnMeta("id", "continuous", False),
                          ColumnMeta("zip", "categorical"),
                          ColumnMeta("city", "categorical")], "id")
    csv = tmp_path / "t.csv"
    csv.write_text("id,zip,city\n1,10115,berlin\n2,10115,potsdam\n")
    table = ingest_table(str(csv), tdef)
    fd = FunctionalDependency("t", "zip", "city")
    projected = apply_fd_projection(table, [fd])
    assert "t.city" in projected.data
    assert not projected.fd_dictionaries
