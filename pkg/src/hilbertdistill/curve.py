"""Hilbert curve construction: L-system guides, index transforms, mapping tables.

Conventions (fixed once, used everywhere):

* 2D cells are (i, j); a "look up" move increments i, a "look right" move
  increments j.  3D cells are (i, j, k).
* The walk starts at the origin heading right; the first cell has index 0.
* The turn constants are rendered as unicode: TurnLeft = ``⊕``,
  TurnRight = ``⊖``, Forward = ``▷`` (repeated stride times).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidRegionError, UnsupportedDimensionError
from .kernels import curve_axes

SYM_FORWARD = "▷"
SYM_LEFT = "⊕"
SYM_RIGHT = "⊖"

# Production rules over variables A, B and constants L (turn left),
# R (turn right), F (forward).
_RULES = {"A": "LBFRAFARFBL", "B": "RAFLBFBLFAR"}

HEADINGS = {"right": (0, 1), "up": (1, 0), "left": (0, -1), "down": (-1, 0)}


@dataclass(frozen=True)
class CurveSpec:
    """Dimension and order of a Hilbert curve (side 2**p, length 2**(n*p))."""

    n: int
    p: int

    def __post_init__(self):
        if self.n not in (2, 3):
            raise UnsupportedDimensionError(f"dimension must be 2 or 3, got {self.n}")
        if self.p < 1:
            raise ValueError(f"order must be >= 1, got {self.p}")

    @property
    def side(self) -> int:
        return 1 << self.p

    @property
    def length(self) -> int:
        return 1 << (self.n * self.p)


@dataclass(frozen=True)
class Region:
    """Per-axis lattice sizes of a feature region, e.g. (D, W, H) or (W, H)."""

    extents: tuple[int, ...]

    def __post_init__(self):
        if any(e < 1 for e in self.extents):
            raise InvalidRegionError(f"extents must be positive, got {self.extents}")

    @property
    def n(self) -> int:
        return len(self.extents)

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.extents))

    @classmethod
    def of(cls, *extents: int) -> "Region":
        return cls(tuple(int(e) for e in extents))


def select_order(region: Region, n: int) -> int:
    """Order of the smallest curve whose cube holds the region.

    ceil(log2(max extent)), clamped to 1 so a curve always exists for
    degenerate one-cell regions.
    """
    if region.n != n:
        raise InvalidRegionError(
            f"region has {region.n} extents but dimension is {n}"
        )
    return max(1, int(np.ceil(np.log2(max(region.extents)))))


@dataclass(frozen=True)
class WalkGuide:
    """Expanded walking guides: turn/forward tokens plus the initial heading.

    Tokens are ('F', stride), ('L', 0) or ('R', 0) tuples; a stride-m forward
    is m unit moves and renders as m forward symbols.
    """

    tokens: tuple[tuple[str, int], ...]
    initial_heading: str = "right"

    def to_string(self) -> str:
        parts = []
        for kind, stride in self.tokens:
            if kind == "F":
                parts.append(SYM_FORWARD * stride)
            elif kind == "L":
                parts.append(SYM_LEFT)
            else:
                parts.append(SYM_RIGHT)
        return "".join(parts)

    def forward_steps(self) -> int:
        return sum(stride for kind, stride in self.tokens if kind == "F")

    def walk(self, start=(0, 0)) -> list[tuple[int, int]]:
        """Cells visited by executing the guide, starting cell included."""
        i, j = start
        di, dj = HEADINGS[self.initial_heading]
        cells = [(i, j)]
        for kind, stride in self.tokens:
            if kind == "L":
                di, dj = dj, -di
            elif kind == "R":
                di, dj = -dj, di
            else:
                for _ in range(stride):
                    i += di
                    j += dj
                    cells.append((i, j))
        return cells


def cancel_turns(symbols: str) -> str:
    """Remove adjacent opposite-turn pairs until none remain."""
    out: list[str] = []
    for ch in symbols:
        if out and {out[-1], ch} == {"L", "R"}:
            out.pop()
        else:
            out.append(ch)
    return "".join(out)


def _tokens_from_symbols(symbols: str) -> tuple[tuple[str, int], ...]:
    tokens: list[tuple[str, int]] = []
    for ch in symbols:
        if ch == "F" and tokens and tokens[-1][0] == "F":
            tokens[-1] = ("F", tokens[-1][1] + 1)
        elif ch == "F":
            tokens.append(("F", 1))
        else:
            tokens.append((ch, 0))
    return tuple(tokens)


def expand_guides(spec: CurveSpec) -> WalkGuide:
    """Fully expanded, cancelled walking guides for a vanilla 2D curve."""
    if spec.n != 2:
        raise UnsupportedDimensionError(
            "guide expansion is 2D; 3D curves go through transform_index"
        )
    s = "A"
    for _ in range(spec.p):
        s = "".join(_RULES.get(ch, ch) for ch in s)
    s = "".join(ch for ch in s if ch in "LRF")
    return WalkGuide(_tokens_from_symbols(cancel_turns(s)))


# ---------------------------------------------------------------------------
# Per-point index transform (reflection/rotation per recursion level).
# Works in "transpose" form: the index bits are distributed across one word
# per axis, with axis words taken from the reversed cell coordinates so that
# the n=2 result coincides with the guide walk.
# ---------------------------------------------------------------------------


def transform_index(spec: CurveSpec, cell) -> int:
    """Curve index of a lattice cell inside the full hypercube."""
    coords = tuple(int(c) for c in cell)
    if len(coords) != spec.n:
        raise ValueError(f"cell {cell} does not match dimension {spec.n}")
    if any(c < 0 or c >= spec.side for c in coords):
        raise ValueError(f"cell {cell} outside the {spec.side}^{spec.n} cube")
    n, p = spec.n, spec.p
    X = list(reversed(coords))
    M = 1 << (p - 1)
    Q = M
    while Q > 1:
        P = Q - 1
        for i in range(n):
            if X[i] & Q:
                X[0] ^= P
            else:
                t = (X[0] ^ X[i]) & P
                X[0] ^= t
                X[i] ^= t
        Q >>= 1
    for i in range(1, n):
        X[i] ^= X[i - 1]
    t = 0
    Q = M
    while Q > 1:
        if X[n - 1] & Q:
            t ^= Q - 1
        Q >>= 1
    v = 0
    for q in range(p - 1, -1, -1):
        for i in range(n):
            v = (v << 1) | (((X[i] ^ t) >> q) & 1)
    return v


def inverse_transform(spec: CurveSpec, index: int) -> tuple[int, ...]:
    """Lattice cell visited at a curve index (inverse of transform_index)."""
    if index < 0 or index >= spec.length:
        raise ValueError(f"index {index} outside [0, {spec.length})")
    n, p = spec.n, spec.p
    X = [0] * n
    for q in range(p):
        for i in range(n):
            X[i] |= ((index >> (q * n + (n - 1 - i))) & 1) << q
    N = 2 << (p - 1)
    t = X[n - 1] >> 1
    for i in range(n - 1, 0, -1):
        X[i] ^= X[i - 1]
    X[0] ^= t
    Q = 2
    while Q != N:
        P = Q - 1
        for i in range(n - 1, -1, -1):
            if X[i] & Q:
                X[0] ^= P
            else:
                t = (X[0] ^ X[i]) & P
                X[0] ^= t
                X[i] ^= t
        Q <<= 1
    return tuple(reversed(X))


# ---------------------------------------------------------------------------
# Mapping tables.
# ---------------------------------------------------------------------------

LAYOUTS = ("padded", "compacted")


class MappingTable:
    """Bijection between region cells and 1D curve slots.

    ``entry_axes[a][t]`` is coordinate ``a`` of the t-th entry and
    ``entry_indices[t]`` its 1D slot; entries are sorted by slot.  Padded
    layout keeps the full-curve indices (code length 2**(n*p), non-region
    slots invalid); compacted layout renumbers region cells 0..K-1 in curve
    order.  When the slots are exactly 0..K-1 (compacted, or padded over the
    full cube) the index vector is kept implicit, so building a table over a
    large full cube never touches an O(K) index array.
    """

    def __init__(self, spec, region, layout, entry_axes, entry_indices, code_length):
        self.spec = spec
        self.region = region
        self.layout = layout
        self.entry_axes = entry_axes
        self._entry_indices = entry_indices  # None means identity 0..K-1
        self.code_length = code_length

    @property
    def entry_count(self) -> int:
        return self.entry_axes.shape[1]

    @property
    def identity_slots(self) -> bool:
        return self._entry_indices is None

    @property
    def entry_indices(self) -> np.ndarray:
        if self._entry_indices is None:
            return np.arange(self.entry_count, dtype=np.int64)
        return self._entry_indices

    def __eq__(self, other):
        return (
            isinstance(other, MappingTable)
            and self.spec == other.spec
            and self.region == other.region
            and self.layout == other.layout
            and np.array_equal(self.entry_axes, other.entry_axes)
            and np.array_equal(self.entry_indices, other.entry_indices)
            and self.code_length == other.code_length
        )

    def cells(self) -> np.ndarray:
        """Entries as a (K, n) int array in slot order."""
        return np.ascontiguousarray(self.entry_axes.T.astype(np.int64))

    @cached_property
    def _index_grid(self) -> np.ndarray:
        grid = np.full(self.region.extents, -1, dtype=np.int64)
        grid[tuple(self.entry_axes)] = self.entry_indices
        return grid

    def index_of(self, cell) -> int:
        """1D slot of a region cell."""
        cell = tuple(int(c) for c in cell)
        if len(cell) != self.spec.n or any(
            c < 0 or c >= e for c, e in zip(cell, self.region.extents)
        ):
            raise ValueError(f"cell {cell} outside region {self.region.extents}")
        return int(self._index_grid[cell])

    def cell_of(self, index: int) -> tuple[int, ...]:
        """Region cell occupying a 1D slot."""
        if self._entry_indices is None:
            if not 0 <= index < self.entry_count:
                raise KeyError(f"slot {index} is not mapped")
            return tuple(int(c) for c in self.entry_axes[:, index])
        pos = np.searchsorted(self._entry_indices, index)
        if pos >= self.entry_count or self._entry_indices[pos] != index:
            raise KeyError(f"slot {index} is not mapped")
        return tuple(int(c) for c in self.entry_axes[:, pos])

    @property
    def valid_slots(self) -> np.ndarray:
        """Boolean mask over the code: True where a region cell lives."""
        mask = np.zeros(self.code_length, dtype=bool)
        mask[self.entry_indices] = True
        return mask


def build_mapping(
    spec: CurveSpec, region: Region, layout: str = "padded", impl: str | None = None
) -> MappingTable:
    """Walk the full-space curve and keep the cells inside the region."""
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    if region.n != spec.n:
        raise InvalidRegionError(
            f"region dimensionality {region.n} != curve dimension {spec.n}"
        )
    if any(e > spec.side for e in region.extents):
        raise InvalidRegionError(
            f"region {region.extents} exceeds curve side {spec.side}"
        )
    axes = curve_axes(spec.n, spec.p, impl=impl)
    full = all(e == spec.side for e in region.extents)
    if full:
        entry_axes = axes
        indices = None
    else:
        keep = axes[0] < region.extents[0]
        for a in range(1, spec.n):
            keep &= axes[a] < region.extents[a]
        entry_axes = axes[:, keep]
        indices = np.flatnonzero(keep)
    if layout == "compacted":
        code_length = region.cell_count
        entry_indices = None
    else:
        code_length = spec.length
        entry_indices = indices
    return MappingTable(spec, region, layout, entry_axes, entry_indices, code_length)


def render_svg(table: MappingTable, cell_px: int = 16, margin: int = 8) -> str:
    """Standalone SVG with one polyline through cell centers in slot order."""
    if table.spec.n != 2:
        raise UnsupportedDimensionError("SVG rendering requires n=2")
    side = table.spec.side
    size = side * cell_px + 2 * margin
    pts = []
    for t in range(table.entry_count):
        i = int(table.entry_axes[0, t])
        j = int(table.entry_axes[1, t])
        x = margin + (j + 0.5) * cell_px
        y = margin + (side - i - 0.5) * cell_px  # i grows upward, SVG y grows down
        pts.append(f"{x:g},{y:g}")
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size}" height="{size}" viewBox="0 0 {size} {size}">\n'
        f'  <polyline fill="none" stroke="#1f4e79" stroke-width="2" '
        f'points="{" ".join(pts)}"/>\n'
        "</svg>\n"
    )
