"""
Tests for keyed random streams, parallel cells and result artifacts.
"""

import json
import os

import numpy as np

from utils.artifacts import (HASH_PREFIX, config_hash, list_artifacts, markdown_table, read_csv_artifact,
                             write_csv, write_json, write_markdown)
from utils.parallel import run_cells
from utils.rng import derive_seed, stream


def _keyed_draw(seed: int, member: int) -> float:
    return float(stream("test", seed, member).random())


def test_stream_depends_only_on_keys():
    """Test that a stream is reproducible and separated by purpose and keys."""
    a = stream("bootstrap", 3, 0).integers(0, 1000, size=20)

    assert np.array_equal(a, stream("bootstrap", 3, 0).integers(0, 1000, size=20))
    assert not np.array_equal(a, stream("bootstrap", 3, 1).integers(0, 1000, size=20))
    assert not np.array_equal(a, stream("shuffle", 3, 0).integers(0, 1000, size=20))


def test_derive_seed_range():
    """Test that derived seeds are stable 31-bit integers."""
    seeds = [derive_seed("bo_pair", s, f, m) for s in range(3) for f in range(3) for m in range(2)]

    assert all(0 <= s < 2 ** 31 for s in seeds)
    assert len(set(seeds)) == len(seeds)
    assert derive_seed("bo_pair", 0, 0, 0) == seeds[0]


def test_run_cells_preserves_order_and_results():
    """Test that parallel execution returns the serial results in order."""
    cells = [(s, m) for s in range(4) for m in range(2)]

    serial = run_cells(_keyed_draw, cells, n_jobs=1)
    assert serial == [_keyed_draw(*c) for c in cells]
    assert run_cells(_keyed_draw, cells, n_jobs=2) == serial


def test_config_hash_is_order_independent():
    """Test that key order does not change the hash but values do."""
    assert config_hash({'a': 1, 'b': [1, 2]}) == config_hash({'b': [1, 2], 'a': 1})
    assert config_hash({'a': 1}) != config_hash({'a': 2})
    assert len(config_hash({})) == 16


def test_write_and_read_csv(tmp_path):
    """Test the hash comment line and the round trip of the table."""
    out = str(tmp_path)
    path = write_csv(out, "compare", [{'method': 'erm', 'mean': 0.125}, {'method': 'twin', 'mean': 0.05}],
                     ['method', 'mean'], "abc123")

    with open(path, encoding="utf-8") as f:
        assert f.readline() == f"{HASH_PREFIX}abc123\n"
        assert f.readline() == "method,mean\n"
    cfg_hash, frame = read_csv_artifact(path)
    assert cfg_hash == "abc123"
    assert frame['method'].tolist() == ['erm', 'twin']
    assert frame['mean'].tolist() == [0.125, 0.05]


def test_write_json_fields(tmp_path):
    """Test that summaries carry hash, seeds and version, and NaN becomes null."""
    path = write_json(str(tmp_path), "sweep", {'slope': float("nan"), 'value': np.float64(0.5)}, "h", [0, 1])
    with open(path, encoding="utf-8") as f:
        document = json.load(f)

    assert document['config_hash'] == "h"
    assert document['seeds'] == [0, 1]
    assert document['version'] == "1.0.0"
    assert 'created_at' in document
    assert document['slope'] is None
    assert document['value'] == 0.5


def test_markdown_outputs(tmp_path):
    """Test the table rendering and the report file."""
    table = markdown_table([{'method': 'erm', 'churn': 0.123456, 'lo': float("nan")}], ['method', 'churn', 'lo'])

    assert table.splitlines()[0] == "| method | churn | lo |"
    assert table.splitlines()[2] == "| erm | 0.1235 |  |"
    path = write_markdown(str(tmp_path), "report", "Report", [("Table", table)], "h")
    with open(path, encoding="utf-8") as f:
        text = f.read()
    assert "config_hash: `h`" in text
    assert "## Table" in text


def test_list_artifacts(tmp_path):
    """Test that only CSV files are listed, sorted by name."""
    for name in ("b.csv", "a.csv", "notes.md"):
        (tmp_path / name).write_text("x\n", encoding="utf-8")

    assert [a['name'] for a in list_artifacts(str(tmp_path))] == ["a", "b"]
    assert list_artifacts(os.path.join(str(tmp_path), "missing")) == []
