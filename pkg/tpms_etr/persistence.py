"""Sublevel persistence of vertex-valued cubical complexes.

The complex is the full cubical complex of a closed uniform grid; every
k-cube takes the maximum of its 2^k vertex values. Vertices are ranked by
(value, linear index) and a cube enters with its highest-ranked vertex,
lower-dimensional cubes first, so the filtration is a lower-star filtration
with a deterministic tie-break.

Two engines produce identical diagrams:
- reduction: GF(2) column reduction with clearing, all dimensions
- fast: elder-rule union-find over minimum spanning tree edges; dimension 0
  on the 6-connected vertex graph, dimension 2 by duality on the
  26-connected superlevel graph with an exterior node
"""

import csv
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import product
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import minimum_spanning_tree

from tpms_etr.exceptions import ArtifactIOError, DomainError, NonFiniteSampleError
from tpms_etr.models.persistence import GridIndex, PersistenceDiagram, PersistencePair, Point
from tpms_etr.models.tpms import Box, ScalarField

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

Engine = Literal["auto", "reduction", "fast"]

# Grids up to this many vertices use the reduction engine under method="auto"
REDUCTION_VERTEX_LIMIT = 1000

DIAGRAM_HEADER = ["dim", "birth", "death", "bx", "by", "bz", "dx", "dy", "dz"]


# =============================================================================
# Filtration Grid
# =============================================================================

@dataclass(frozen=True, eq=False)
class FiltrationGrid:
    """Vertex values of a closed uniform grid spanning a box."""

    values: FloatArray
    box: Box

    def __post_init__(self) -> None:
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise DomainError("filtration grid needs at least 2 vertices per axis")
        bad = ~np.isfinite(self.values)
        if bad.any():
            index = tuple(int(i) for i in np.argwhere(bad)[0])
            raise NonFiniteSampleError(index, self.point(index))

    @property
    def dims(self) -> GridIndex:
        """Vertex counts (N_x, N_y, N_z)."""
        return self.values.shape  # type: ignore[return-value]

    @property
    def num_vertices(self) -> int:
        return self.values.size

    @cached_property
    def flat_values(self) -> FloatArray:
        """Vertex values in linear (k-fastest) index order."""
        return self.values.ravel()

    @cached_property
    def ranks(self) -> IntArray:
        """Position of every vertex in (value, linear index) order."""
        order = np.argsort(self.flat_values, kind="stable")
        ranks = np.empty(self.num_vertices, dtype=np.int64)
        ranks[order] = np.arange(self.num_vertices)
        return ranks

    def index(self, linear: int) -> GridIndex:
        """Grid index of a linear vertex id."""
        index = np.unravel_index(linear, self.dims)
        return tuple(int(i) for i in index)  # type: ignore[return-value]

    def point(self, index: GridIndex) -> Point:
        """Spatial position of a grid vertex."""
        return tuple(  # type: ignore[return-value]
            float(lo + (hi - lo) * i / (n - 1))
            for lo, hi, i, n in zip(self.box.lower, self.box.upper, index, self.dims)
        )

    def cube_values(self, extent: tuple[int, int, int]) -> FloatArray:
        """Max-rule values of every cube with the given per-axis extent (0 or 1).

        The result is indexed by the cube's lowest corner.
        """
        nx, ny, nz = self.dims
        ex, ey, ez = extent
        out = self.values[: nx - ex, : ny - ey, : nz - ez]
        for dx, dy, dz in product(range(ex + 1), range(ey + 1), range(ez + 1)):
            out = np.maximum(out, self.values[dx: nx - ex + dx, dy: ny - ey + dy, dz: nz - ez + dz])
        return out

    def cube_counts(self) -> tuple[int, int, int, int]:
        """Number of cubes per dimension 0..3."""
        counts = [0, 0, 0, 0]
        nx, ny, nz = self.dims
        for extent in product((0, 1), repeat=3):
            ex, ey, ez = extent
            counts[sum(extent)] += (nx - ex) * (ny - ey) * (nz - ez)
        return tuple(counts)  # type: ignore[return-value]


def build_filtration(field: ScalarField, box: Box, dims: GridIndex) -> FiltrationGrid:
    """Sample a field on the closed uniform lattice of a box.

    Args:
        field: Any scalar field with separable grid evaluation.
        box: The spatial box, both faces included.
        dims: Vertex counts per axis (each >= 2).

    Returns:
        The filtration grid.

    Raises:
        DomainError: If a dimension is below 2.
        NonFiniteSampleError: If a sample is NaN or infinite, naming the vertex.
    """
    if any(n < 2 for n in dims):
        raise DomainError(f"grid dims must be >= 2 per axis, got {dims}")
    values = np.asarray(field.evaluate_grid(*box.axes(dims)), dtype=np.float64)
    return FiltrationGrid(values=values.reshape(dims), box=box)


def euler_characteristic(grid: FiltrationGrid, t: float) -> int:
    """Euler characteristic of the sublevel complex K^t."""
    chi = 0
    for extent in product((0, 1), repeat=3):
        chi += (-1) ** sum(extent) * int(np.count_nonzero(grid.cube_values(extent) <= t))
    return chi


# =============================================================================
# Pair Construction
# =============================================================================

def _make_pair(
    grid: FiltrationGrid, dim: int, birth_v: int, death_v: int | None
) -> PersistencePair:
    values = grid.flat_values
    birth_index = grid.index(birth_v)
    if death_v is None:
        return PersistencePair(
            dim=dim, birth=float(values[birth_v]), birth_vertex=birth_index,
            birth_point=grid.point(birth_index),
        )
    death_index = grid.index(death_v)
    return PersistencePair(
        dim=dim,
        birth=float(values[birth_v]),
        death=float(values[death_v]),
        birth_vertex=birth_index,
        death_vertex=death_index,
        birth_point=grid.point(birth_index),
        death_point=grid.point(death_index),
    )


def _sorted_pairs(pairs: list[PersistencePair]) -> list[PersistencePair]:
    return sorted(pairs, key=lambda p: (p.dim, p.birth, p.death, p.birth_vertex))


# =============================================================================
# Reduction Engine
# =============================================================================

_EXTENTS = list(product((0, 1), repeat=3))


def _cube_corner_offsets(dims: GridIndex, extent: tuple[int, ...]) -> list[int]:
    _, ny, nz = dims
    strides = (ny * nz, nz, 1)
    return [
        sum(s * d for s, d in zip(strides, delta))
        for delta in product(*(range(e + 1) for e in extent))
    ]


def _reduction_pairs(grid: FiltrationGrid) -> list[PersistencePair]:
    """Column reduction over GF(2) with clearing on the full cubical complex."""
    dims = grid.dims
    nx, ny, nz = dims
    strides = (ny * nz, nz, 1)
    ranks = grid.ranks
    vertex_of_rank = np.argsort(ranks)

    # Enumerate cubes as (anchor vertex, extent code); code bits are (x, y, z).
    ids, cube_dims, max_ranks = [], [], []
    lin = np.arange(grid.num_vertices).reshape(dims)
    for code, extent in enumerate(_EXTENTS):
        anchors = lin[: nx - extent[0], : ny - extent[1], : nz - extent[2]].ravel()
        corner_ranks = np.stack([ranks[anchors + off]
                                 for off in _cube_corner_offsets(dims, extent)])
        ids.append(anchors * 8 + code)
        cube_dims.append(np.full(len(anchors), sum(extent)))
        max_ranks.append(corner_ranks.max(axis=0))
    cube_id = np.concatenate(ids)
    cube_dim = np.concatenate(cube_dims)
    max_rank = np.concatenate(max_ranks)

    order = np.lexsort((cube_id, cube_dim, max_rank))
    cube_id, cube_dim, max_rank = cube_id[order], cube_dim[order], max_rank[order]
    position = np.full(grid.num_vertices * 8, -1, dtype=np.int64)
    position[cube_id] = np.arange(len(cube_id))

    def boundary(j: int) -> int:
        anchor, code = divmod(int(cube_id[j]), 8)
        column = 0
        for axis, bit in enumerate((4, 2, 1)):
            if code & bit:
                face = (code ^ bit)
                column ^= 1 << int(position[anchor * 8 + face])
                column ^= 1 << int(position[(anchor + strides[axis]) * 8 + face])
        return column

    by_dim = [np.flatnonzero(cube_dim == d).tolist() for d in range(4)]
    pivot_owner: dict[int, int] = {}
    reduced: dict[int, int] = {}
    cleared: set[int] = set()
    finite: list[tuple[int, int, int]] = []

    for d in (3, 2, 1):
        for j in by_dim[d]:
            if j in cleared:
                continue
            column = boundary(j)
            while column:
                low = column.bit_length() - 1
                owner = pivot_owner.get(low)
                if owner is None:
                    break
                column ^= reduced[owner]
            if column:
                low = column.bit_length() - 1
                pivot_owner[low] = j
                reduced[j] = column
                cleared.add(low)
                finite.append((d - 1, low, j))

    def vertex(j: int) -> int:
        return int(vertex_of_rank[max_rank[j]])

    values = grid.flat_values
    pairs = []
    for dim, low, j in finite:
        birth_v, death_v = vertex(low), vertex(j)
        if values[birth_v] != values[death_v]:
            pairs.append(_make_pair(grid, dim, birth_v, death_v))

    killers = set(reduced)
    for d in range(3):
        for j in by_dim[d]:
            if j not in cleared and j not in killers:
                pairs.append(_make_pair(grid, d, vertex(j), None))
    return pairs


# =============================================================================
# Union-Find Engine
# =============================================================================

@lru_cache(maxsize=8)
def _grid_edges(dims: GridIndex, full: bool) -> tuple[IntArray, IntArray]:
    """Vertex pairs of the 6-connected (full=False) or 26-connected grid graph."""
    nx, ny, nz = dims
    lin = np.arange(nx * ny * nz, dtype=np.int64).reshape(dims)
    if full:
        offsets = [d for d in product((-1, 0, 1), repeat=3) if d > (0, 0, 0)]
    else:
        offsets = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    src, dst = [], []
    for offset in offsets:
        a = tuple(slice(max(0, -o), n - max(0, o)) for o, n in zip(offset, dims))
        b = tuple(slice(max(0, o), n - max(0, -o)) for o, n in zip(offset, dims))
        src.append(lin[a].ravel())
        dst.append(lin[b].ravel())
    return np.concatenate(src), np.concatenate(dst)


@lru_cache(maxsize=8)
def _boundary_vertices(dims: GridIndex) -> IntArray:
    mask = np.ones(dims, dtype=bool)
    mask[1:-1, 1:-1, 1:-1] = False
    return np.flatnonzero(mask.ravel())


def _elder_merges(
    n_nodes: int, src: IntArray, dst: IntArray, weights: FloatArray, entry: IntArray
) -> list[tuple[int, int]]:
    """Kruskal sweep with the elder rule.

    Every node is born at its entry time; an edge becomes active when its
    later endpoint enters. When two components meet, the younger one dies.

    Returns:
        (dying root, edge endpoint with the later entry) for every merge.
    """
    graph = coo_matrix((weights, (src, dst)), shape=(n_nodes, n_nodes)).tocsr()
    tree = minimum_spanning_tree(graph).tocoo()
    order = np.argsort(tree.data, kind="stable")
    rows, cols = tree.row[order].tolist(), tree.col[order].tolist()
    entry_list = entry.tolist()

    # Roots are always the oldest node of their component.
    parent = list(range(n_nodes))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    merges = []
    for u, v in zip(rows, cols):
        ru, rv = find(u), find(v)
        if ru == rv:
            continue
        young, old = (ru, rv) if entry_list[ru] > entry_list[rv] else (rv, ru)
        late = u if entry_list[u] > entry_list[v] else v
        merges.append((young, late))
        parent[young] = old
    return merges


def _component_pairs(grid: FiltrationGrid) -> list[PersistencePair]:
    """0-dim pairs from the sublevel sweep of the 6-connected vertex graph."""
    n = grid.num_vertices
    ranks = grid.ranks
    src, dst = _grid_edges(grid.dims, False)
    hi = np.maximum(ranks[src], ranks[dst]).astype(np.float64)
    lo = np.minimum(ranks[src], ranks[dst]).astype(np.float64)
    weights = hi * n + lo + 1.0

    values = grid.flat_values
    pairs = [
        _make_pair(grid, 0, young, late)
        for young, late in _elder_merges(n, src, dst, weights, ranks)
        if values[young] != values[late]
    ]
    pairs.append(_make_pair(grid, 0, int(np.argmin(ranks)), None))
    return pairs


def _cavity_pairs(grid: FiltrationGrid) -> list[PersistencePair]:
    """2-dim pairs from the superlevel sweep of the 26-connected vertex graph.

    A cavity of the sublevel set is a component of the higher-valued vertices
    that does not reach the box boundary. It is born when its separating
    vertex s enters the sublevel set and dies when its maximum m does, so the
    superlevel merge (m dies at s) yields the pair (value(s), value(m)).
    """
    n = grid.num_vertices
    exterior = n
    entry = np.append(n - 1 - grid.ranks, -1)
    src, dst = _grid_edges(grid.dims, True)
    hi = np.maximum(entry[src], entry[dst]).astype(np.float64)
    lo = np.minimum(entry[src], entry[dst]).astype(np.float64)
    weights = hi * n + lo + 2.0

    boundary = _boundary_vertices(grid.dims)
    src = np.concatenate([src, boundary])
    dst = np.concatenate([dst, np.full(len(boundary), exterior)])
    weights = np.concatenate([weights, entry[boundary].astype(np.float64) * n + 1.0])

    values = grid.flat_values
    pairs = []
    for young, late in _elder_merges(n + 1, src, dst, weights, entry):
        # young is a local maximum, late the separating vertex
        if values[late] != values[young]:
            pairs.append(_make_pair(grid, 2, late, young))
    return pairs


# =============================================================================
# Diagrams
# =============================================================================

def compute_persistence(
    grid: FiltrationGrid,
    method: Engine = "auto",
    dimensions: tuple[int, ...] | None = None,
) -> PersistenceDiagram:
    """Persistence diagram of the sublevel filtration of a grid.

    Args:
        grid: The filtration grid.
        method: "reduction", "fast", or "auto" (reduction for small grids).
        dimensions: Homological dimensions to report. Defaults to (0, 1, 2)
            for the reduction engine and (0, 2) for the fast engine; asking
            the fast engine for dimension 1 falls back to reduction.

    Returns:
        Diagram with pairs sorted by (dim, birth, death). Zero-persistence
        pairs are dropped.
    """
    if method == "auto":
        method = "reduction" if grid.num_vertices <= REDUCTION_VERTEX_LIMIT else "fast"
    if method == "fast" and dimensions is not None and 1 in dimensions:
        logger.info(f"Dimension 1 requested on {grid.dims} grid, using reduction engine")
        method = "reduction"

    if method == "reduction":
        wanted = dimensions or (0, 1, 2)
        pairs = [p for p in _reduction_pairs(grid) if p.dim in wanted]
    elif method == "fast":
        wanted = dimensions or (0, 2)
        pairs = []
        if 0 in wanted:
            pairs += _component_pairs(grid)
        if 2 in wanted:
            pairs += _cavity_pairs(grid)
    else:
        raise DomainError(f"unknown persistence method '{method}'")

    logger.debug(f"Persistence on {grid.dims} ({method}): {len(pairs)} pairs")
    return PersistenceDiagram(
        pairs=_sorted_pairs(pairs), dimensions=tuple(sorted(wanted)), grid_dims=grid.dims
    )


def betti_at(diagram: PersistenceDiagram, t: float) -> tuple[int, int, int]:
    """Betti numbers (b0, b1, b2) at threshold t: pairs with birth <= t < death."""
    counts = [0, 0, 0]
    for pair in diagram.pairs:
        if pair.birth <= t < pair.death:
            counts[pair.dim] += 1
    return counts[0], counts[1], counts[2]


# =============================================================================
# Diagram CSV
# =============================================================================

def write_diagram_csv(diagram: PersistenceDiagram, path: str | Path) -> None:
    """Write a diagram as CSV; death columns stay empty for infinite pairs."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(DIAGRAM_HEADER)
            for p in diagram.pairs:
                death = [repr(p.death), *map(repr, p.death_point)] if p.death_point else [""] * 4
                writer.writerow([p.dim, repr(p.birth), death[0], *map(repr, p.birth_point),
                                 *death[1:]])
    except OSError as e:
        raise ArtifactIOError(path, str(e)) from e


def read_diagram_csv(path: str | Path, box: Box, grid_dims: GridIndex) -> PersistenceDiagram:
    """Read a diagram CSV, recovering grid indices from the stored positions."""

    def to_index(point: Point) -> GridIndex:
        return tuple(  # type: ignore[return-value]
            int(round((x - lo) / (hi - lo) * (n - 1)))
            for x, lo, hi, n in zip(point, box.lower, box.upper, grid_dims)
        )

    pairs = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != DIAGRAM_HEADER:
                raise ArtifactIOError(path, f"unexpected header {reader.fieldnames}")
            for row in reader:
                birth_point = (float(row["bx"]), float(row["by"]), float(row["bz"]))
                finite = row["death"] != ""
                death_point = (
                    (float(row["dx"]), float(row["dy"]), float(row["dz"])) if finite else None
                )
                pairs.append(PersistencePair(
                    dim=int(row["dim"]),
                    birth=float(row["birth"]),
                    death=float(row["death"]) if finite else math.inf,
                    birth_vertex=to_index(birth_point),
                    death_vertex=to_index(death_point) if death_point else None,
                    birth_point=birth_point,
                    death_point=death_point,
                ))
    except OSError as e:
        raise ArtifactIOError(path, str(e)) from e
    return PersistenceDiagram(
        pairs=pairs, dimensions=tuple(sorted({p.dim for p in pairs})), grid_dims=grid_dims
    )
