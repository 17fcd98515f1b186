import json

import numpy as np
import pytest

from hilbertdistill.curve import CurveSpec, Region, build_mapping
from hilbertdistill.fileio import (
    mapping_to_json_obj,
    read_mapping,
    read_mapping_json,
    read_tensor,
    write_mapping,
    write_mapping_json,
    write_tensor,
    write_vh_mapping,
)
from hilbertdistill.vh import ActivationMask, vh_mapping


def test_tensor_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for shape in [(5,), (3, 4), (2, 3, 4), (2, 2, 2, 2)]:
        arr = rng.normal(size=shape).astype(np.float32)
        path = tmp_path / "t.hdtn"
        write_tensor(path, arr)
        back = read_tensor(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, arr)


def test_tensor_header_layout(tmp_path):
    path = tmp_path / "t.hdtn"
    write_tensor(path, np.zeros((2, 3), dtype=np.float32))
    raw = path.read_bytes()
    assert raw[:4] == b"HDTN"
    assert raw[4] == 1 and raw[5] == 0 and raw[6] == 2
    assert int.from_bytes(raw[7:11], "little") == 2
    assert int.from_bytes(raw[11:15], "little") == 3
    assert len(raw) == 15 + 24


def test_tensor_rejects_bad_files(tmp_path):
    path = tmp_path / "bad.hdtn"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ValueError):
        read_tensor(path)
    path.write_bytes(b"HDTN" + bytes([1, 0, 1]) + (100).to_bytes(4, "little"))
    with pytest.raises(ValueError):
        read_tensor(path)


def test_mapping_binary_round_trip(tmp_path):
    for spec, region, layout in [
        (CurveSpec(2, 2), Region.of(3, 4), "padded"),
        (CurveSpec(2, 3), Region.of(8, 8), "compacted"),
        (CurveSpec(3, 2), Region.of(3, 3, 2), "compacted"),
    ]:
        table = build_mapping(spec, region, layout)
        path = tmp_path / "m.hdmt"
        write_mapping(path, table)
        back = read_mapping(path)
        assert back.spec == table.spec
        assert back.region == table.region
        assert back.layout == table.layout
        assert back.code_length == table.code_length
        assert np.array_equal(back.entry_axes, table.entry_axes.astype(np.int64))
        assert np.array_equal(back.entry_indices, table.entry_indices)


def test_mapping_binary_header(tmp_path):
    table = build_mapping(CurveSpec(2, 1), Region.of(2, 2), "padded")
    path = tmp_path / "m.hdmt"
    write_mapping(path, table)
    raw = path.read_bytes()
    assert raw[:4] == b"HDMT"
    assert list(raw[4:8]) == [1, 2, 1, 0]
    assert int.from_bytes(raw[8:12], "little") == 2
    assert int.from_bytes(raw[12:16], "little") == 2
    # 4 entries of (2 * u16 + u32)
    assert len(raw) == 16 + 4 * 8


def test_mapping_json_round_trip(tmp_path):
    table = build_mapping(CurveSpec(3, 2), Region.of(3, 2, 4), "padded")
    path = tmp_path / "m.json"
    write_mapping_json(path, table)
    back = read_mapping_json(path)
    assert back.spec == table.spec and back.layout == table.layout
    assert np.array_equal(back.entry_axes, table.entry_axes.astype(np.int64))
    assert np.array_equal(back.entry_indices, table.entry_indices)
    obj = json.loads(path.read_text())
    indices = [e["index"] for e in obj["entries"]]
    assert indices == sorted(indices)


def test_vh_mapping_round_trips(tmp_path):
    active = np.zeros((4, 4), dtype=bool)
    active[2:4, :] = True
    mask = ActivationMask.from_array(active)
    table = vh_mapping(CurveSpec(2, 2), Region.of(4, 4), mask)

    bpath = tmp_path / "v.hdmt"
    write_vh_mapping(bpath, table)
    back = read_mapping(bpath)
    assert np.array_equal(back.base.entry_axes, table.base.entry_axes.astype(np.int64))
    assert np.array_equal(back.rep_axes, table.rep_axes)
    assert np.array_equal(back.rep_indices, table.rep_indices)

    jpath = tmp_path / "v.json"
    write_mapping_json(jpath, table)
    jback = read_mapping_json(jpath)
    assert jback.representatives() == table.representatives()


def test_exports_deterministic(tmp_path):
    table = build_mapping(CurveSpec(2, 3), Region.of(5, 6), "compacted")
    p1, p2 = tmp_path / "a.hdmt", tmp_path / "b.hdmt"
    write_mapping(p1, table)
    write_mapping(p2, build_mapping(CurveSpec(2, 3), Region.of(5, 6), "compacted"))
    assert p1.read_bytes() == p2.read_bytes()
    j1, j2 = tmp_path / "a.json", tmp_path / "b.json"
    write_mapping_json(j1, table)
    write_mapping_json(j2, table)
    assert j1.read_bytes() == j2.read_bytes()


def test_json_obj_schema():
    table = build_mapping(CurveSpec(2, 1), Region.of(2, 2), "padded")
    obj = mapping_to_json_obj(table)
    assert set(obj) == {"n", "p", "region", "layout", "entries"}
    assert obj["entries"][0] == {"cell": [0, 0], "index": 0}
