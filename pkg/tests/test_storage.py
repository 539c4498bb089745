import numpy as np
import pytest

from wpos.storage import (
    Manifest,
    export_pdp_csv,
    read_array,
    read_checkpoint,
    read_csv,
    read_json,
    read_jsonl,
    write_array,
    write_checkpoint,
    write_csv,
    write_json,
    write_jsonl,
)


def test_array_file(tmp_path):
    array = np.random.default_rng(0).normal(size=(3, 4, 5))
    path = write_array(tmp_path / "nested" / "a.bin", array)

    assert path.read_bytes()[:4] == b"WPOS"
    assert np.array_equal(read_array(path), array)


def test_scalar_and_empty_arrays(tmp_path):
    assert read_array(write_array(tmp_path / "s.bin", 2.5)).shape == ()
    assert read_array(write_array(tmp_path / "e.bin", np.zeros((4, 0)))).shape == (4, 0)


def test_array_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ValueError):
        read_array(bad)

    path = write_array(tmp_path / "t.bin", np.ones(10))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_array(path)

    path = write_array(tmp_path / "x.bin", np.ones(2))
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(ValueError):
        read_array(path)


def test_checkpoint_keeps_names_and_order(tmp_path):
    state = {"branch0.0.weight": np.ones((2, 1, 3, 3)), "head.0.bias": np.arange(4.0)}
    loaded = read_checkpoint(write_checkpoint(tmp_path / "c.bin", state))

    assert list(loaded) == list(state)
    for name in state:
        assert np.array_equal(loaded[name], state[name])


def test_checkpoint_rejects_array_file(tmp_path):
    path = write_array(tmp_path / "a.bin", np.ones(3))

    with pytest.raises(ValueError):
        read_checkpoint(path)


def test_json_files(tmp_path):
    path = write_json(tmp_path / "j.json", {"b": 1, "a": [1.5, "x"]})

    assert path.read_text().index('"a"') < path.read_text().index('"b"')
    assert read_json(path) == {"a": [1.5, "x"], "b": 1}

    path.write_text("{broken")
    with pytest.raises(ValueError):
        read_json(path)


def test_jsonl_files(tmp_path):
    rows = [{"zone": 1}, {"zone": 7}]

    assert read_jsonl(write_jsonl(tmp_path / "r.jsonl", rows)) == rows


def test_csv_floats_are_exact(tmp_path):
    value = 0.1 + 0.2
    path = write_csv(tmp_path / "m.csv", [{"F": np.int64(5), "rate": value}])
    rows = read_csv(path)

    assert rows == [{"F": "5", "rate": repr(value)}]
    assert float(rows[0]["rate"]) == value


def test_csv_needs_columns(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "empty.csv", [])

    path = write_csv(tmp_path / "header.csv", [], columns=["F", "rate"])
    assert path.read_text() == "F,rate\n"


def test_export_pdp_csv(tmp_path):
    pdp = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    rows = read_csv(export_pdp_csv(tmp_path / "pdp.csv", pdp, np.array([5, 1])))

    assert len(rows) == 6
    assert list(rows[0]) == ["record", "sensor", "zone", "bin_0", "bin_1", "bin_2", "bin_3"]
    assert rows[4]["zone"] == "1"
    assert float(rows[4]["bin_2"]) == pdp[1, 1, 2]


def test_manifest(tmp_path):
    manifest = Manifest(tmp_path)
    manifest.add(tmp_path / "data" / "b.bin", "pdp", split="train")
    manifest.add(tmp_path / "a.csv", "metrics")
    manifest.add(tmp_path / "data" / "b.bin", "pdp", split="test")
    manifest.write()

    loaded = Manifest.load(tmp_path)
    assert loaded.paths() == ["a.csv", "data/b.bin"]
    assert loaded.find("pdp", split="test")[0]["path"] == "data/b.bin"
    assert loaded.find("pdp", split="train") == []
    assert read_json(tmp_path / "manifest.json")["schema_version"] == 1


def test_missing_manifest_is_empty(tmp_path):
    assert Manifest.load(tmp_path).entries == []
