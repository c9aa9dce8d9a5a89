"""Marching tetrahedra isosurfaces of sublevel sets, volumes and mesh files.

Each grid cube is split into the six tetrahedra around its main diagonal,
so every cube face is cut along its low-to-high diagonal and neighbouring
cubes agree. The surface of {f <= c} is closed against the box by capping
the boundary triangles of that split with the clipped sublevel polygon.
"""

import logging
from dataclasses import dataclass
from itertools import permutations
from multiprocessing.pool import ThreadPool
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from tpms_etr.exceptions import ArtifactIOError, DomainError, NonFiniteSampleError, OpenMeshError
from tpms_etr.models.tpms import Box, ScalarField

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

ZERO_NUDGE = 1e-12
# Edge crossings this close to a grid vertex are welded onto it
WELD_DISTANCE = 1e-8
# Cube layers meshed per vectorized pass
SLAB_LAYERS = 8

# Binary STL record: normal, three vertices, attribute byte count
STL_RECORD = np.dtype([
    ("normal", "<f4", (3,)),
    ("vertex0", "<f4", (3,)),
    ("vertex1", "<f4", (3,)),
    ("vertex2", "<f4", (3,)),
    ("attributes", "<u2"),
])
STL_HEADER = b"tpms-etr binary STL".ljust(80, b" ")


@dataclass
class TriMesh:
    """Triangle mesh with outward-oriented faces."""

    vertices: FloatArray
    triangles: IntArray

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def face_normals(self) -> FloatArray:
        """Unit normals from the vertex winding (zero for degenerate faces)."""
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)

    def boundary_edge_count(self) -> int:
        """Number of undirected edges used by an odd number of triangles."""
        if self.is_empty:
            return 0
        t = self.triangles
        edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return int(np.count_nonzero(counts % 2))


# =============================================================================
# Sampling
# =============================================================================

def _kuhn_offsets(dims: tuple[int, int, int]) -> IntArray:
    """Linear vertex offsets of the six tetrahedra of a cube, shape (6, 4)."""
    _, ny, nz = dims
    strides = np.array([ny * nz, nz, 1])
    tets = []
    for a, b, _ in permutations(range(3)):
        path = [np.zeros(3, dtype=int)]
        path.append(path[-1] + np.eye(3, dtype=int)[a])
        path.append(path[-1] + np.eye(3, dtype=int)[b])
        path.append(np.ones(3, dtype=int))
        tets.append([int(p @ strides) for p in path])
    return np.array(tets, dtype=np.int64)


def sample_levels(field: ScalarField, box: Box, resolution: int) -> FloatArray:
    """Sample a field on the closed resolution^3 lattice of a box.

    Raises:
        DomainError: If resolution is below 2.
        NonFiniteSampleError: If a sample is not finite.
    """
    if resolution < 2:
        raise DomainError("mesh resolution must be at least 2")
    axes = box.axes((resolution,) * 3)
    values = np.asarray(field.evaluate_grid(*axes), dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteSampleError(index, tuple(float(axes[d][i]) for d, i in enumerate(index)))
    return values


class _Emitter:
    """Collects welded triangle corners keyed by grid vertex or grid edge."""

    def __init__(self, levels: FloatArray, box: Box) -> None:
        self.dims = levels.shape
        self.n = levels.size
        self.levels = levels.ravel()
        self.axes = box.axes(self.dims)
        self.keys: list[IntArray] = []
        self.points: list[FloatArray] = []

    def position(self, ids: IntArray) -> FloatArray:
        ix, iy, iz = np.unravel_index(ids, self.dims)
        return np.stack([self.axes[0][ix], self.axes[1][iy], self.axes[2][iz]], axis=-1)

    def edge_corner(self, inside: IntArray, outside: IntArray) -> tuple[IntArray, FloatArray]:
        va, vb = self.levels[inside], self.levels[outside]
        t = va / (va - vb)
        pa, pb = self.position(inside), self.position(outside)
        length = np.linalg.norm(pb - pa, axis=-1)
        near_a = t * length <= WELD_DISTANCE
        near_b = (1.0 - t) * length <= WELD_DISTANCE
        edge_keys = self.n + inside * self.n + outside
        keys = np.where(near_a, inside, np.where(near_b, outside, edge_keys))
        points = np.where(
            near_a[..., None], pa,
            np.where(near_b[..., None], pb, pa + t[..., None] * (pb - pa)),
        )
        return keys, points

    def vertex_corner(self, ids: IntArray) -> tuple[IntArray, FloatArray]:
        return ids, self.position(ids)

    def emit(self, polygon: list[tuple[IntArray, FloatArray]], direction: FloatArray) -> None:
        """Store convex polygons (one per row) as triangle fans facing `direction`."""
        keys = np.stack([k for k, _ in polygon], axis=1)
        pts = np.stack([p for _, p in polygon], axis=1)
        normal = sum(
            np.cross(pts[:, i] - pts[:, 0], pts[:, i + 1] - pts[:, 0])
            for i in range(1, len(polygon) - 1)
        )
        flip = np.einsum("ij,ij->i", normal, direction) < 0
        keys[flip] = keys[flip][:, ::-1]
        pts[flip] = pts[flip][:, ::-1]
        for i in range(1, len(polygon) - 1):
            fan = [0, i, i + 1]
            self.keys.append(keys[:, fan])
            self.points.append(pts[:, fan])

    def mesh(self) -> TriMesh:
        if not self.keys:
            return TriMesh.empty()
        keys = np.concatenate(self.keys)
        pts = np.concatenate(self.points).reshape(-1, 3)
        _, first, inverse = np.unique(keys.ravel(), return_index=True, return_inverse=True)
        triangles = inverse.reshape(-1, 3).astype(np.int64)
        keep = (
            (triangles[:, 0] != triangles[:, 1])
            & (triangles[:, 1] != triangles[:, 2])
            & (triangles[:, 2] != triangles[:, 0])
        )
        return TriMesh(vertices=pts[first], triangles=triangles[keep])


def _clip_cells(emitter: _Emitter, cells: IntArray, face_normal: FloatArray | None = None) -> None:
    """Emit the sublevel boundary inside tetrahedra, or the sublevel part of box triangles.

    Args:
        emitter: Triangle collector.
        cells: (M, 4) tetrahedra or (M, 3) box-face triangles of grid vertex ids.
        face_normal: Outward box normal for face triangles; None for tetrahedra,
            which orient towards their outside vertices.
    """
    inside = emitter.levels[cells] < 0
    count = inside.sum(axis=1)
    size = cells.shape[1]
    ordered = np.take_along_axis(cells, np.argsort(~inside, axis=1, kind="stable"), axis=1)
    e, v = emitter.edge_corner, emitter.vertex_corner

    for k in range(1, size + 1 if face_normal is not None else size):
        c = ordered[count == k]
        if len(c) == 0:
            continue
        if face_normal is None:
            pts = emitter.position(c)
            direction = pts[:, k:].mean(axis=1) - pts[:, :k].mean(axis=1)
        else:
            direction = np.broadcast_to(face_normal, (len(c), 3))

        if size == 4:
            if k == 1:
                polygon = [e(c[:, 0], c[:, j]) for j in (1, 2, 3)]
            elif k == 3:
                polygon = [e(c[:, j], c[:, 3]) for j in (0, 1, 2)]
            else:
                polygon = [e(c[:, 0], c[:, 2]), e(c[:, 0], c[:, 3]),
                           e(c[:, 1], c[:, 3]), e(c[:, 1], c[:, 2])]
        elif k == 3:
            polygon = [v(c[:, 0]), v(c[:, 1]), v(c[:, 2])]
        elif k == 2:
            polygon = [v(c[:, 0]), v(c[:, 1]), e(c[:, 1], c[:, 2]), e(c[:, 0], c[:, 2])]
        else:
            polygon = [v(c[:, 0]), e(c[:, 0], c[:, 1]), e(c[:, 0], c[:, 2])]
        emitter.emit(polygon, direction)


def _box_faces(dims: tuple[int, int, int]) -> list[tuple[IntArray, FloatArray]]:
    """Boundary triangles of the cube split, with the outward normal of each box face."""
    lin = np.arange(int(np.prod(dims)), dtype=np.int64).reshape(dims)
    faces = []
    for axis in range(3):
        for side, sign in ((0, -1.0), (dims[axis] - 1, 1.0)):
            sheet = np.take(lin, side, axis=axis)
            s00, s10 = sheet[:-1, :-1].ravel(), sheet[1:, :-1].ravel()
            s01, s11 = sheet[:-1, 1:].ravel(), sheet[1:, 1:].ravel()
            tris = np.concatenate([np.stack([s00, s10, s11], axis=1),
                                   np.stack([s00, s01, s11], axis=1)])
            normal = np.zeros(3)
            normal[axis] = sign
            faces.append((tris, normal))
    return faces


def mesh_levels(levels: FloatArray, box: Box, c: float, threads: int | None = None) -> TriMesh:
    """Mesh the boundary of {levels <= c} over pre-sampled grid values.

    With `threads` above 1 the slabs of cube layers are clipped in a thread
    pool; the result does not depend on the thread count.
    """
    values = levels - c
    values = np.where(values == 0.0, ZERO_NUDGE, values)
    dims = values.shape
    emitter = _Emitter(values, box)
    offsets = _kuhn_offsets(dims)
    lin = np.arange(values.size, dtype=np.int64).reshape(dims)

    def clip_slab(x0: int) -> _Emitter:
        slab = _Emitter(values, box)
        anchors = lin[x0: min(x0 + SLAB_LAYERS, dims[0] - 1), :-1, :-1].ravel()
        tets = (anchors[:, None, None] + offsets[None, :, :]).reshape(-1, 4)
        inside = (slab.levels[tets] < 0).sum(axis=1)
        tets = tets[(inside > 0) & (inside < 4)]
        if len(tets):
            _clip_cells(slab, tets)
        return slab

    starts = list(range(0, dims[0] - 1, SLAB_LAYERS))
    if threads and threads > 1 and len(starts) > 1:
        with ThreadPool(min(threads, len(starts))) as pool:
            slabs = pool.map(clip_slab, starts)
    else:
        slabs = [clip_slab(x0) for x0 in starts]
    for slab in slabs:
        emitter.keys.extend(slab.keys)
        emitter.points.extend(slab.points)

    for tris, normal in _box_faces(dims):
        _clip_cells(emitter, tris, normal)

    mesh = emitter.mesh()
    logger.debug(f"Meshed level {c:g}: {len(mesh.vertices)} vertices, "
                 f"{mesh.num_triangles} triangles")
    return mesh


def marching_tetrahedra(
    field: ScalarField, box: Box, c: float, resolution: int, threads: int | None = None
) -> TriMesh:
    """Closed, outward-oriented boundary mesh of the sublevel set {field <= c}.

    Args:
        field: Scalar field.
        box: Meshing box; the sublevel region is capped on its faces.
        c: Threshold.
        resolution: Grid vertices per axis (>= 2).
        threads: Worker threads for clipping.

    Returns:
        Welded triangle mesh; empty when c lies below the field's minimum.
    """
    return mesh_levels(sample_levels(field, box, resolution), box, c, threads)


# =============================================================================
# Measures
# =============================================================================

def enclosed_volume(mesh: TriMesh) -> float:
    """Signed volume by the divergence theorem (positive for outward orientation).

    Raises:
        OpenMeshError: If the mesh has boundary edges.
    """
    if mesh.is_empty:
        return 0.0
    open_edges = mesh.boundary_edge_count()
    if open_edges:
        raise OpenMeshError(open_edges)
    v = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)


def component_sizes(mesh: TriMesh) -> list[int]:
    """Triangle count of every edge-connected surface component, largest first."""
    if mesh.is_empty:
        return []
    t = mesh.triangles
    n = len(mesh.vertices)
    rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    counts = np.bincount(labels[t[:, 0]])
    return sorted((int(c) for c in counts if c > 0), reverse=True)


# =============================================================================
# Mesh Files
# =============================================================================

def export_stl(mesh: TriMesh, path: str | Path) -> None:
    """Write a binary little-endian STL with normals recomputed from the winding."""
    records = np.zeros(mesh.num_triangles, dtype=STL_RECORD)
    if not mesh.is_empty:
        v = mesh.vertices[mesh.triangles]
        records["normal"] = mesh.face_normals()
        records["vertex0"] = v[:, 0]
        records["vertex1"] = v[:, 1]
        records["vertex2"] = v[:, 2]
    try:
        with open(path, "wb") as f:
            f.write(STL_HEADER)
            f.write(np.uint32(mesh.num_triangles).astype("<u4").tobytes())
            f.write(records.tobytes())
    except OSError as e:
        raise ArtifactIOError(path, str(e)) from e


def read_stl(path: str | Path) -> TriMesh:
    """Read a binary STL, welding bit-identical vertex positions."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ArtifactIOError(path, str(e)) from e
    if len(data) < 84:
        raise ArtifactIOError(path, "truncated STL header")
    count = int(np.frombuffer(data, dtype="<u4", count=1, offset=80)[0])
    if len(data) != 84 + count * STL_RECORD.itemsize:
        raise ArtifactIOError(path, f"expected {count} triangles, file size {len(data)}")
    records = np.frombuffer(data, dtype=STL_RECORD, count=count, offset=84)
    if count == 0:
        return TriMesh.empty()
    corners = np.stack([records["vertex0"], records["vertex1"], records["vertex2"]], axis=1)
    vertices, inverse = np.unique(corners.reshape(-1, 3), axis=0, return_inverse=True)
    return TriMesh(vertices.astype(np.float64), inverse.reshape(-1, 3).astype(np.int64))


def export_obj(mesh: TriMesh, path: str | Path) -> None:
    """Write an ASCII OBJ (v and f lines, 1-based indices)."""
    try:
        with open(path, "w", encoding="utf-8") as f:
            for x, y, z in mesh.vertices.tolist():
                f.write(f"v {x!r} {y!r} {z!r}\n")
            for a, b, c in (mesh.triangles + 1).tolist():
                f.write(f"f {a} {b} {c}\n")
    except OSError as e:
        raise ArtifactIOError(path, str(e)) from e
