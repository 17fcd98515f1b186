"""Variable-length Hilbert curves: densify over activation areas, stride over
context areas.

The construction recurses over the vanilla curve's quadrant (octant) tree.
A subtree whose cells contain no activation is not expanded; its traversal
contracts to the straight run of unit steps from the subtree's entry corner
to its exit corner, which is exactly the stride compensation the production
rules describe (a skipped side-2 quadrant turns the neighbouring forward into
a double step).  Expanded subtrees are therefore always entered at their
vanilla corner, so active cells are always on the curve and the walk never
leaves the hypercube.  The root is the axiom and always expands.

Each forward is a unit move that visits its endpoint; a stride-m forward
visits the m cells it passes through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import (
    CurveSpec,
    MappingTable,
    Region,
    WalkGuide,
    _tokens_from_symbols,
    cancel_turns,
)
from .errors import InvalidRegionError, UnsupportedDimensionError
from .kernels import curve_axes


@dataclass(frozen=True)
class ActivationMask:
    """Boolean lattice marking activation cells over a feature region."""

    region: Region
    active: np.ndarray

    def __post_init__(self):
        if tuple(self.active.shape) != self.region.extents:
            raise InvalidRegionError(
                f"mask shape {self.active.shape} != region {self.region.extents}"
            )

    @classmethod
    def from_array(cls, active) -> "ActivationMask":
        arr = np.asarray(active, dtype=bool)
        return cls(Region(tuple(arr.shape)), arr)


class ActivitySummary:
    """Summed-area table over a mask for O(1) box-count queries."""

    def __init__(self, mask: ActivationMask):
        self.extents = mask.region.extents
        table = mask.active.astype(np.int64)
        for axis in range(table.ndim):
            table = np.cumsum(table, axis=axis)
        self._table = np.pad(table, [(1, 0)] * table.ndim)

    def count(self, lo, hi) -> int:
        """Active cells in the half-open box [lo, hi); clipped to the mask."""
        lo = [max(0, q) for q in lo]
        hi = [min(e, q) for e, q in zip(self.extents, hi)]
        if any(a >= b for a, b in zip(lo, hi)):
            return 0
        total = 0
        n = len(lo)
        for corner in np.ndindex(*(2,) * n):
            idx = tuple(hi[a] if corner[a] else lo[a] for a in range(n))
            total += (-1) ** (n - sum(corner)) * int(self._table[idx])
        return total


def subtree_activity(mask: ActivationMask, bounds) -> bool:
    """True iff any active cell lies in the box ``bounds`` = ((lo,hi),...).

    Boxes may extend past the region; cells outside it count as inactive.
    """
    lo = [b[0] for b in bounds]
    hi = [b[1] for b in bounds]
    return ActivitySummary(mask).count(lo, hi) > 0


@dataclass
class VhMappingTable:
    """On-curve cells in visit order plus representatives for skipped cells."""

    base: MappingTable
    rep_axes: np.ndarray  # (n, M) skipped region cells
    rep_indices: np.ndarray  # (M,) on-curve index representing each

    @property
    def skipped_count(self) -> int:
        return self.rep_axes.shape[1]

    def representative_of(self, cell) -> int:
        """On-curve index standing in for a skipped region cell."""
        cell = tuple(int(c) for c in cell)
        hit = np.all(self.rep_axes.T == np.array(cell), axis=1)
        pos = np.flatnonzero(hit)
        if pos.size == 0:
            raise KeyError(f"cell {cell} is not a skipped cell")
        return int(self.rep_indices[pos[0]])

    def representatives(self) -> dict[tuple[int, ...], int]:
        return {
            tuple(int(c) for c in self.rep_axes[:, t]): int(self.rep_indices[t])
            for t in range(self.skipped_count)
        }


def _block_count(summary: ActivitySummary, entry, level: int) -> int:
    side = 1 << level
    lo = [(int(c) >> level) << level for c in entry]
    hi = [q + side for q in lo]
    return summary.count(lo, hi)


def _visit_segments(spec: CurveSpec, mask: ActivationMask, axes: np.ndarray):
    """Curve-order visit plan: ('slice', v0, v1) or ('run', v0, v1, level)."""
    n = spec.n
    summary = ActivitySummary(mask)
    in_region = all(e == spec.side for e in mask.region.extents)
    segments = []

    def rec(v0: int, level: int, root: bool):
        size = 1 << (n * level)
        if not root:
            entry = axes[:, v0]
            count = _block_count(summary, entry, level)
            if count == 0:
                if level == 0:
                    segments.append(("slice", v0, v0 + 1))
                else:
                    segments.append(("run", v0, v0 + size, level))
                return
            if count == size:
                # Fully active block: the whole vanilla sub-walk survives.
                segments.append(("slice", v0, v0 + size))
                return
        if level == 0:
            segments.append(("slice", v0, v0 + 1))
            return
        child = size >> n
        for c in range(1 << n):
            rec(v0 + c * child, level - 1, False)

    # Fast path keeps the degenerate all-active-full-cube case cheap.
    if in_region and summary.count([0] * n, list(mask.region.extents)) == spec.length:
        return [("slice", 0, spec.length)]
    rec(0, spec.p, True)
    return segments


def _run_cells(axes: np.ndarray, v0: int, v1: int) -> np.ndarray:
    """Unit-step straight run from the entry to the exit cell of a subtree."""
    entry = axes[:, v0].astype(np.int64)
    exit_ = axes[:, v1 - 1].astype(np.int64)
    delta = exit_ - entry
    moving = np.flatnonzero(delta)
    if moving.size != 1:
        raise AssertionError("subtree displacement must be axis-aligned")
    a = int(moving[0])
    steps = abs(int(delta[a])) + 1
    run = np.repeat(entry[:, None], steps, axis=1)
    run[a] = np.arange(entry[a], exit_[a] + np.sign(delta[a]), np.sign(delta[a]))
    return run


def vh_visited_cells(
    spec: CurveSpec, mask: ActivationMask, impl: str | None = None
) -> np.ndarray:
    """Cells visited by the variable-length walk, in visit order, shape (n, T)."""
    axes = curve_axes(spec.n, spec.p, impl=impl)
    parts = []
    for seg in _visit_segments(spec, mask, axes):
        if seg[0] == "slice":
            parts.append(axes[:, seg[1] : seg[2]].astype(np.int64))
        else:
            parts.append(_run_cells(axes, seg[1], seg[2]))
    return np.concatenate(parts, axis=1)


def vh_expand(spec: CurveSpec, mask: ActivationMask) -> WalkGuide:
    """Walking guides for the variable-length curve (2D).

    All-active masks reproduce the vanilla guides exactly; a skipped subtree
    of side s contributes s-1 forwards, so a skipped side-2 quadrant doubles
    the neighbouring forward as in the two-quadrant reference case.
    """
    if spec.n != 2:
        raise UnsupportedDimensionError(
            "guide expansion is 2D; 3D variable-length mapping uses vh_mapping"
        )
    if any(e > spec.side for e in mask.region.extents):
        raise InvalidRegionError(
            f"mask {mask.region.extents} exceeds curve side {spec.side}"
        )
    axes = curve_axes(2, spec.p)
    summary = ActivitySummary(mask)
    rule_children = {"A": "BAAB", "B": "ABBA"}
    out: list[str] = []

    def rec(var: str, level: int, v0: int, root: bool):
        if not root and _block_count(summary, axes[:, v0], level) == 0:
            out.append("F" * ((1 << level) - 1))
            return
        if level == 0:
            return
        kids = rule_children[var]
        child = 1 << (2 * (level - 1))
        t0, t1, t2, t3 = ("L", "R", "R", "L") if var == "A" else ("R", "L", "L", "R")
        # rule A: t0 c0 F t1 c1 F c2 t2 F c3 t3
        out.append(t0)
        rec(kids[0], level - 1, v0, False)
        out.append("F")
        out.append(t1)
        rec(kids[1], level - 1, v0 + child, False)
        out.append("F")
        rec(kids[2], level - 1, v0 + 2 * child, False)
        out.append(t2)
        out.append("F")
        rec(kids[3], level - 1, v0 + 3 * child, False)
        out.append(t3)

    rec("A", spec.p, 0, True)
    return WalkGuide(_tokens_from_symbols(cancel_turns("".join(out))))


def vh_mapping(
    spec: CurveSpec,
    region: Region,
    mask: ActivationMask,
    impl: str | None = None,
) -> VhMappingTable:
    """Walk the variable-length curve and index the visited region cells.

    Visited region cells get consecutive indices in visit order; every other
    region cell is assigned its nearest on-curve cell (Euclidean distance,
    ties broken by the smaller curve index).
    """
    if region.n != spec.n:
        raise InvalidRegionError(
            f"region dimensionality {region.n} != curve dimension {spec.n}"
        )
    if mask.region.extents != region.extents:
        raise InvalidRegionError(
            f"mask extents {mask.region.extents} != region {region.extents}"
        )
    if any(e > spec.side for e in region.extents):
        raise InvalidRegionError(
            f"region {region.extents} exceeds curve side {spec.side}"
        )
    visited = vh_visited_cells(spec, mask, impl=impl)
    keep = visited[0] < region.extents[0]
    for a in range(1, spec.n):
        keep &= visited[a] < region.extents[a]
    oncurve = visited[:, keep]
    k = oncurve.shape[1]
    base = MappingTable(
        spec=spec,
        region=region,
        layout="compacted",
        entry_axes=oncurve,
        entry_indices=None,
        code_length=k,
    )
    grid = np.zeros(region.extents, dtype=bool)
    grid[tuple(oncurve)] = True
    skipped = np.argwhere(~grid).T.astype(np.int64)
    rep_indices = np.empty(skipped.shape[1], dtype=np.int64)
    pts = oncurve.T.astype(np.int64)
    for start in range(0, skipped.shape[1], 1024):
        chunk = skipped[:, start : start + 1024].T
        d2 = ((chunk[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        # lexicographic (distance, index) minimum
        key = d2 * k + np.arange(k, dtype=np.int64)[None, :]
        rep_indices[start : start + 1024] = np.argmin(key, axis=1)
    return VhMappingTable(base=base, rep_axes=skipped, rep_indices=rep_indices)
