"""On-disk formats: HDTN tensor files, HDMT mapping tables, JSON mirrors.

HDTN: magic "HDTN", u8 version=1, u8 dtype (0 = float32), u8 ndim (1..4),
ndim x u32 dims, then row-major little-endian payload.

HDMT: magic "HDMT", u8 version=1, u8 n, u8 p, u8 layout (0 = padded,
1 = compacted, 2 = variable-length), u32 extent per axis.  For layouts 0/1
the entry count is the product of the extents and entries follow directly as
(u16 per coordinate, u32 index), sorted by index.  The variable-length
layout cannot derive its counts, so it carries u32 entry_count, the entries,
u32 representative_count, then (u16 per coordinate, u32 on-curve index) per
skipped cell.  Everything is little-endian.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .curve import CurveSpec, MappingTable, Region
from .vh import VhMappingTable

TENSOR_MAGIC = b"HDTN"
MAPPING_MAGIC = b"HDMT"
_LAYOUT_CODES = {"padded": 0, "compacted": 1}
_LAYOUT_NAMES = {0: "padded", 1: "compacted"}
_VH_LAYOUT = 2


def write_tensor(path, array) -> None:
    """Write a float32 tensor file."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if not 1 <= arr.ndim <= 4:
        raise ValueError(f"tensor rank must be 1..4, got {arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<BBB", 1, 0, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TENSOR_MAGIC:
            raise ValueError(f"{path}: not a tensor file (magic {magic!r})")
        version, dtype, ndim = struct.unpack("<BBB", fh.read(3))
        if version != 1:
            raise ValueError(f"{path}: unsupported tensor version {version}")
        if dtype != 0:
            raise ValueError(f"{path}: unsupported dtype code {dtype}")
        if not 1 <= ndim <= 4:
            raise ValueError(f"{path}: bad rank {ndim}")
        dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        count = int(np.prod(dims))
        payload = fh.read(count * 4)
        if len(payload) != count * 4:
            raise ValueError(f"{path}: truncated payload")
        return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def _pack_entries(axes: np.ndarray, indices: np.ndarray) -> bytes:
    n, k = axes.shape
    rec = np.zeros(k, dtype=[("c", "<u2", (n,)), ("v", "<u4")])
    rec["c"] = axes.T
    rec["v"] = indices
    return rec.tobytes()


def _unpack_entries(buf: bytes, n: int, count: int):
    rec = np.frombuffer(buf, dtype=[("c", "<u2", (n,)), ("v", "<u4")], count=count)
    return rec["c"].T.astype(np.int64), rec["v"].astype(np.int64)


def write_mapping(path, table: MappingTable) -> None:
    with open(path, "wb") as fh:
        fh.write(MAPPING_MAGIC)
        fh.write(
            struct.pack(
                "<BBBB", 1, table.spec.n, table.spec.p, _LAYOUT_CODES[table.layout]
            )
        )
        fh.write(struct.pack(f"<{table.spec.n}I", *table.region.extents))
        fh.write(_pack_entries(table.entry_axes, table.entry_indices))


def write_vh_mapping(path, table: VhMappingTable) -> None:
    base = table.base
    with open(path, "wb") as fh:
        fh.write(MAPPING_MAGIC)
        fh.write(struct.pack("<BBBB", 1, base.spec.n, base.spec.p, _VH_LAYOUT))
        fh.write(struct.pack(f"<{base.spec.n}I", *base.region.extents))
        fh.write(struct.pack("<I", base.entry_count))
        fh.write(_pack_entries(base.entry_axes, base.entry_indices))
        fh.write(struct.pack("<I", table.skipped_count))
        fh.write(_pack_entries(table.rep_axes, table.rep_indices))


def read_mapping(path):
    """Read an HDMT file; returns MappingTable or VhMappingTable."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAPPING_MAGIC:
            raise ValueError(f"{path}: not a mapping file (magic {magic!r})")
        version, n, p, layout = struct.unpack("<BBBB", fh.read(4))
        if version != 1:
            raise ValueError(f"{path}: unsupported mapping version {version}")
        extents = struct.unpack(f"<{n}I", fh.read(4 * n))
        spec = CurveSpec(n, p)
        region = Region(tuple(int(e) for e in extents))
        entry_bytes = 2 * n + 4
        if layout in _LAYOUT_NAMES:
            count = region.cell_count
            axes, indices = _unpack_entries(fh.read(count * entry_bytes), n, count)
            name = _LAYOUT_NAMES[layout]
            code_length = spec.length if name == "padded" else region.cell_count
            return MappingTable(spec, region, name, axes, indices, code_length)
        if layout != _VH_LAYOUT:
            raise ValueError(f"{path}: unknown layout code {layout}")
        (count,) = struct.unpack("<I", fh.read(4))
        axes, indices = _unpack_entries(fh.read(count * entry_bytes), n, count)
        base = MappingTable(spec, region, "compacted", axes, indices, count)
        (reps,) = struct.unpack("<I", fh.read(4))
        rep_axes, rep_indices = _unpack_entries(fh.read(reps * entry_bytes), n, reps)
        return VhMappingTable(base, rep_axes, rep_indices)


def mapping_to_json_obj(table: MappingTable) -> dict:
    return {
        "n": table.spec.n,
        "p": table.spec.p,
        "region": list(table.region.extents),
        "layout": table.layout,
        "entries": [
            {
                "cell": [int(c) for c in table.entry_axes[:, t]],
                "index": int(table.entry_indices[t]),
            }
            for t in range(table.entry_count)
        ],
    }


def vh_mapping_to_json_obj(table: VhMappingTable) -> dict:
    obj = mapping_to_json_obj(table.base)
    obj["layout"] = "vh"
    obj["representatives"] = [
        {
            "cell": [int(c) for c in table.rep_axes[:, t]],
            "index": int(table.rep_indices[t]),
        }
        for t in range(table.skipped_count)
    ]
    return obj


def write_mapping_json(path, table) -> None:
    if isinstance(table, VhMappingTable):
        obj = vh_mapping_to_json_obj(table)
    else:
        obj = mapping_to_json_obj(table)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def read_mapping_json(path):
    with open(path) as fh:
        obj = json.load(fh)
    spec = CurveSpec(int(obj["n"]), int(obj["p"]))
    region = Region(tuple(int(e) for e in obj["region"]))
    entries = obj["entries"]
    axes = np.array([e["cell"] for e in entries], dtype=np.int64).reshape(
        len(entries), spec.n
    ).T
    indices = np.array([e["index"] for e in entries], dtype=np.int64)
    layout = obj["layout"]
    if layout in _LAYOUT_CODES:
        code_length = spec.length if layout == "padded" else region.cell_count
        return MappingTable(spec, region, layout, axes, indices, code_length)
    if layout != "vh":
        raise ValueError(f"{path}: unknown layout {layout!r}")
    base = MappingTable(spec, region, "compacted", axes, indices, len(entries))
    reps = obj["representatives"]
    rep_axes = np.array([e["cell"] for e in reps], dtype=np.int64).reshape(
        len(reps), spec.n
    ).T
    rep_indices = np.array([e["index"] for e in reps], dtype=np.int64)
    return VhMappingTable(base, rep_axes, rep_indices)
