import json

import pytest

from relspn.errors import SchemaError
from relspn.schema import load_schema

from conftest import TOY_CONFIG, write_toy_dataset


def test_toy_schema_loads(toy_schema):
    assert toy_schema.table_names == ["customer", "order"]
    assert len(toy_schema.fks) == 1
    fk = toy_schema.fks[0]
    assert fk.referencing_table == "order"
    assert fk.referenced_table == "customer"
    assert not toy_schema.multi_component


def test_single_table_schema(tmp_path):
    write_toy_dataset(tmp_path)
    config = {"tables": [TOY_CONFIG["tables"][0]], "foreign_keys": []}
    path = tmp_path / "single.json"
    path.write_text(json.dumps(config))
    schema = load_schema(str(path))
    assert schema.table_names == ["customer"]
    assert schema.fks == []


def test_dangling_fk_rejected(tmp_path):
    write_toy_dataset(tmp_path)
    config = json.loads(json.dumps(TOY_CONFIG))
    config["foreign_keys"][0]["references"] = "nonexistent"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config))
    with pytest.raises(SchemaError, match="dangling FK"):
        load_schema(str(path))


def test_fk_must_target_primary_key(tmp_path):
    write_toy_dataset(tmp_path)
    config = json.loads(json.dumps(TOY_CONFIG))
    config["foreign_keys"][0]["referenced_column"] = "c_age"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config))
    with pytest.raises(SchemaError, match="primary key"):
        load_schema(str(path))


def test_missing_csv_rejected(tmp_path):
    config = json.loads(json.dumps(TOY_CONFIG))
    path = tmp_path / "schema.json"
    path.write_text(json.dumps(config))
    with pytest.raises(SchemaError, match="CSV file not found"):
        load_schema(str(path))


def test_fd_on_unknown_column_rejected(tmp_path):
    write_toy_dataset(tmp_path)
    config = json.loads(json.dumps(TOY_CONFIG))
    config["functional_dependencies"] = [
        {"table": "customer", "determinant": "c_zip", "dependent": "c_city"}]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config))
    with pytest.raises(SchemaError, match="c_zip"):
        load_schema(str(path))


def test_spanning_edges_connected(toy_schema):
    edges = toy_schema.spanning_edges({"customer", "order"})
    assert len(edges) == 1


def test_spanning_edges_disconnected(tmp_path):
    write_toy_dataset(tmp_path)
    config = json.loads(json.dumps(TOY_CONFIG))
    config["foreign_keys"] = []
    path = tmp_path / "schema.json"
    path.write_text(json.dumps(config))
    schema = load_schema(str(path))
    assert schema.multi_component
    with pytest.raises(SchemaError, match="not FK-connected"):
        schema.spanning_edges({"customer", "order"})
