"""Shared fixtures: the toy customer/order schema used across the suite.

customer (3 rows)                | order (4 rows)
c_id  c_age  c_region            | o_id  c_id  o_channel
1     20     EUROPE              | 1     1     ONLINE
2     50     EUROPE              | 2     1     STORE
3     80     ASIA                | 3     3     ONLINE
                                 | 4     3     STORE

Customer 2 has no orders, so the full outer join has 5 rows and the
customer-side tuple factors are (2, 0, 2).
"""

import json
import os

import numpy as np
import pytest

from relspn.data import (compute_tuple_factors, full_outer_join_sample,
                         ingest_table)
from relspn.schema import load_schema

CUSTOMER_CSV = """c_id,c_age,c_region
1,20,EUROPE
2,50,EUROPE
3,80,ASIA
"""

ORDER_CSV = """o_id,c_id,o_channel
1,1,ONLINE
2,1,STORE
3,3,ONLINE
4,3,STORE
"""

TOY_CONFIG = {
    "tables": [
        {"name": "customer", "csv": "customer.csv", "primary_key": "c_id",
         "columns": [
             {"name": "c_id", "kind": "continuous", "nullable": False},
             {"name": "c_age", "kind": "continuous"},
             {"name": "c_region", "kind": "categorical"},
         ]},
        {"name": "order", "csv": "order.csv", "primary_key": "o_id",
         "columns": [
             {"name": "o_id", "kind": "continuous", "nullable": False},
             {"name": "c_id", "kind": "continuous"},
             {"name": "o_channel", "kind": "categorical"},
         ]},
    ],
    "foreign_keys": [
        {"table": "order", "column": "c_id",
         "references": "customer", "referenced_column": "c_id"},
    ],
}


def write_toy_dataset(directory) -> str:
    """Write the toy CSVs plus config into a directory; returns config path."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "customer.csv"), "w") as fh:
        fh.write(CUSTOMER_CSV)
    with open(os.path.join(directory, "order.csv"), "w") as fh:
        fh.write(ORDER_CSV)
    config_path = os.path.join(directory, "schema.json")
    with open(config_path, "w") as fh:
        json.dump(TOY_CONFIG, fh)
    return config_path


@pytest.fixture()
def toy_config_path(tmp_path):
    return write_toy_dataset(tmp_path)


@pytest.fixture()
def toy_schema(toy_config_path):
    return load_schema(toy_config_path)


@pytest.fixture()
def toy_tables(toy_schema):
    tables = {t.name: ingest_table(t.csv_path, t) for t in toy_schema.tables}
    compute_tuple_factors(toy_schema, tables)
    return tables


@pytest.fixture()
def toy_join(toy_schema, toy_tables):
    return full_outer_join_sample(toy_schema, toy_tables,
                                  {"customer", "order"}, seed=7)


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
