"""Tests for cubical sublevel persistence."""

import math
from itertools import product

import numpy as np
import pytest

from tpms_etr.exceptions import ArtifactIOError, DomainError, NonFiniteSampleError
from tpms_etr.models.tpms import Box
from tpms_etr.persistence import (
    FiltrationGrid,
    betti_at,
    build_filtration,
    compute_persistence,
    euler_characteristic,
    read_diagram_csv,
    write_diagram_csv,
)


def gf2_rank(matrix):
    """Rank of a 0/1 matrix over GF(2)."""
    m = matrix.copy() % 2
    rank = 0
    for col in range(m.shape[1]):
        rows = np.flatnonzero(m[rank:, col]) + rank
        if len(rows) == 0:
            continue
        m[[rank, rows[0]]] = m[[rows[0], rank]]
        for r in np.flatnonzero(m[:, col]):
            if r != rank:
                m[r] ^= m[rank]
        rank += 1
        if rank == m.shape[0]:
            break
    return rank


def brute_betti(values, t):
    """Betti numbers of the sublevel cubical complex at t by explicit boundary ranks."""
    dims = values.shape
    cubes = {d: [] for d in range(4)}
    index = {}
    for anchor in np.ndindex(*dims):
        for extent in product((0, 1), repeat=3):
            if any(a + e >= n for a, e, n in zip(anchor, extent, dims)):
                continue
            corners = [tuple(a + d for a, d in zip(anchor, delta))
                       for delta in product(*(range(e + 1) for e in extent))]
            if max(values[c] for c in corners) <= t:
                d = sum(extent)
                index[(anchor, extent)] = len(cubes[d])
                cubes[d].append((anchor, extent))

    ranks = {0: 0, 4: 0}
    for d in (1, 2, 3):
        m = np.zeros((len(cubes[d - 1]), len(cubes[d])), dtype=np.uint8)
        for j, (anchor, extent) in enumerate(cubes[d]):
            for axis in range(3):
                if not extent[axis]:
                    continue
                face = tuple(0 if a == axis else e for a, e in enumerate(extent))
                for shift in (0, 1):
                    base = tuple(x + shift if a == axis else x for a, x in enumerate(anchor))
                    m[index[(base, face)], j] ^= 1
        ranks[d] = gf2_rank(m) if m.size else 0
    return tuple(len(cubes[d]) - ranks[d] - ranks[d + 1] for d in range(3))


def union_find_pairs(values):
    """0-dim (birth, death) pairs of the vertex sublevel filtration by the elder rule."""
    dims = values.shape
    parent = {}

    def root(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    birth = {}
    pairs = []
    for flat in np.argsort(values, axis=None, kind="stable"):
        v = np.unravel_index(flat, dims)
        parent[v] = v
        roots = set()
        for axis in range(3):
            for step in (-1, 1):
                u = list(v)
                u[axis] += step
                u = tuple(u)
                if 0 <= u[axis] < dims[axis] and u in parent:
                    roots.add(root(u))
        if not roots:
            birth[v] = values[v]
            continue
        elder = min(roots, key=lambda r: (birth[r], r))
        for r in roots - {elder}:
            pairs.append((float(birth[r]), float(values[v])))
            parent[r] = elder
        parent[v] = elder
    survivors = {root(v) for v in parent}
    pairs += [(float(birth[r]), math.inf) for r in survivors]
    return sorted(pairs)


def pair_key(pair):
    return (pair.dim, pair.birth, pair.death, pair.birth_vertex, pair.death_vertex)


def grid_of(values, upper=1.0):
    return FiltrationGrid(values=np.asarray(values, dtype=np.float64), box=Box.cube(upper))


@pytest.fixture
def shell_grid():
    """3x3x3 grid whose centre is high: the sublevel set below 1 is a hollow shell."""
    values = np.zeros((3, 3, 3))
    values[1, 1, 1] = 1.0
    return grid_of(values)


@pytest.fixture
def ring_grid():
    """3x3x2 grid whose centre column is high: the sublevel set below 1 is a ring."""
    values = np.zeros((3, 3, 2))
    values[1, 1, :] = 1.0
    return grid_of(values)


class TestFiltrationGrid:
    """Tests for grid construction and cube bookkeeping."""

    def test_cube_counts(self, ring_grid):
        """A 3x3x2 grid has 18 vertices, 33 edges, 20 squares and 4 cubes."""
        assert ring_grid.cube_counts() == (18, 33, 20, 4)
        assert euler_characteristic(ring_grid, math.inf) == 1

    def test_cube_values_take_maximum(self, ring_grid):
        """Every cube takes the largest value of its corners."""
        assert ring_grid.cube_values((1, 1, 1)).max() == 1.0
        assert ring_grid.cube_values((0, 0, 1))[0, 0, 0] == 0.0

    def test_point_and_index(self):
        """Linear ids map to grid indices and box positions."""
        grid = grid_of(np.zeros((3, 4, 5)), upper=2.0)
        assert grid.index(1 * 20 + 2 * 5 + 3) == (1, 2, 3)
        assert grid.point((2, 3, 4)) == (2.0, 2.0, 2.0)
        assert grid.point((1, 0, 0)) == (1.0, 0.0, 0.0)

    def test_non_finite_names_vertex(self):
        """A NaN value reports its grid index and position."""
        values = np.zeros((3, 3, 3))
        values[2, 0, 1] = math.nan
        with pytest.raises(NonFiniteSampleError) as excinfo:
            grid_of(values, upper=2.0)
        assert excinfo.value.index == (2, 0, 1)
        assert excinfo.value.point == (2.0, 0.0, 1.0)

    def test_too_small(self, sphere_field, unit_box):
        """Grids need two vertices per axis."""
        with pytest.raises(DomainError):
            build_filtration(sphere_field, unit_box, (1, 4, 4))

    def test_build_samples_closed_lattice(self, slab_field, unit_box):
        """Both box faces are sampled."""
        grid = build_filtration(slab_field, unit_box, (5, 2, 2))
        np.testing.assert_allclose(grid.values[:, 0, 0], [0.0, 0.25, 0.5, 0.75, 1.0])


class TestKnownDiagrams:
    """Tests on grids with known topology."""

    def test_ring_has_one_loop(self, ring_grid):
        """The ring carries one 1-dim class between 0 and 1."""
        diagram = compute_persistence(ring_grid, method="reduction")
        assert [(p.birth, p.death) for p in diagram.by_dim(1)] == [(0.0, 1.0)]
        assert betti_at(diagram, 0.5) == (1, 1, 0)
        assert betti_at(diagram, 1.0) == (1, 0, 0)

    @pytest.mark.parametrize("method", ["reduction", "fast"])
    def test_shell_has_one_cavity(self, shell_grid, method):
        """The shell encloses one cavity that dies at the centre vertex."""
        diagram = compute_persistence(shell_grid, method=method, dimensions=(0, 2))
        cavities = diagram.by_dim(2)
        assert len(cavities) == 1
        assert (cavities[0].birth, cavities[0].death) == (0.0, 1.0)
        assert cavities[0].death_vertex == (1, 1, 1)
        assert betti_at(diagram, 0.0) == (1, 0, 1)

    def test_single_essential_component(self, rng):
        """Exactly one infinite pair, born at the global minimum."""
        grid = grid_of(rng.random((4, 4, 4)))
        diagram = compute_persistence(grid)
        infinite = [p for p in diagram.pairs if p.is_infinite]
        assert len(infinite) == 1
        assert infinite[0].dim == 0
        assert infinite[0].birth == grid.values.min()

    def test_monotone_field_has_no_features(self, slab_field, unit_box):
        """Slabs never split or enclose anything."""
        grid = build_filtration(slab_field, unit_box, (6, 5, 4))
        diagram = compute_persistence(grid, method="reduction")
        assert len(diagram.pairs) == 1


class TestEngines:
    """Tests comparing the reduction and union-find engines."""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_engines_agree_on_distinct_values(self, seed):
        """Both engines produce the same pairs and generating vertices."""
        grid = grid_of(np.random.default_rng(seed).random((4, 5, 6)))
        reduction = compute_persistence(grid, method="reduction", dimensions=(0, 2))
        fast = compute_persistence(grid, method="fast")
        assert [pair_key(p) for p in reduction.pairs] == [pair_key(p) for p in fast.pairs]

    def test_engines_agree_with_ties(self):
        """With heavily tied values both engines yield the same (birth, death) multiset."""
        grid = grid_of(np.random.default_rng(7).integers(0, 4, (5, 5, 5)))
        reduction = compute_persistence(grid, method="reduction", dimensions=(0, 2))
        fast = compute_persistence(grid, method="fast")
        assert [(p.dim, p.birth, p.death) for p in reduction.pairs] == [
            (p.dim, p.birth, p.death) for p in fast.pairs
        ]

    def test_auto_uses_reduction_for_small_grids(self, rng):
        """Small grids report all three dimensions under auto."""
        diagram = compute_persistence(grid_of(rng.random((4, 4, 4))))
        assert diagram.dimensions == (0, 1, 2)

    def test_fast_falls_back_for_loops(self, ring_grid):
        """Asking the fast engine for dimension 1 still finds the loop."""
        diagram = compute_persistence(ring_grid, method="fast", dimensions=(1,))
        assert len(diagram.by_dim(1)) == 1

    def test_unknown_method(self, ring_grid):
        """Unknown engines are rejected."""
        with pytest.raises(DomainError):
            compute_persistence(ring_grid, method="magic")


class TestInvariants:
    """Property checks against brute force and the Euler characteristic."""

    @pytest.mark.parametrize("seed", [3, 4])
    def test_betti_matches_brute_force(self, seed):
        """Diagram Betti numbers equal ranks of the explicit boundary matrices."""
        values = np.random.default_rng(seed).random((3, 3, 3))
        diagram = compute_persistence(grid_of(values), method="reduction")
        for t in np.sort(values.ravel())[::3]:
            assert betti_at(diagram, t) == brute_betti(values, t)

    def test_components_match_union_find(self):
        """On 100 random 8^3 grids the 0-dim pairs equal an elder-rule union-find sweep."""
        rng = np.random.default_rng(2024)
        for _ in range(100):
            values = rng.random((8, 8, 8))
            diagram = compute_persistence(grid_of(values), method="fast", dimensions=(0,))
            assert sorted((p.birth, p.death) for p in diagram.by_dim(0)) == (
                union_find_pairs(values)
            )

    def test_engines_agree_on_random_grids(self):
        """Union-find and reduction agree on 30 random 5^3 grids."""
        rng = np.random.default_rng(77)
        for _ in range(30):
            grid = grid_of(rng.random((5, 5, 5)))
            reduction = compute_persistence(grid, method="reduction", dimensions=(0, 2))
            fast = compute_persistence(grid, method="fast", dimensions=(0, 2))
            assert [pair_key(p) for p in reduction.pairs] == [pair_key(p) for p in fast.pairs]

    @pytest.mark.slow
    def test_betti_matches_brute_force_everywhere(self):
        """On 30 random 5^3 grids Betti numbers match at every vertex value."""
        rng = np.random.default_rng(31)
        for _ in range(30):
            values = rng.random((5, 5, 5))
            diagram = compute_persistence(grid_of(values), method="reduction")
            for t in np.sort(values.ravel()):
                assert betti_at(diagram, t) == brute_betti(values, t)

    def test_small_perturbation_moves_pairs_little(self, rng):
        """Order-preserving noise below delta moves every pair by at most delta."""
        values = rng.random((6, 6, 6))
        gaps = np.diff(np.sort(values.ravel()))
        delta = float(gaps.min()) / 4.0
        noisy = values + rng.uniform(-delta, delta, values.shape)
        a = compute_persistence(grid_of(values), method="reduction", dimensions=(0, 2))
        b = compute_persistence(grid_of(noisy), method="reduction", dimensions=(0, 2))
        assert len(a.pairs) == len(b.pairs)
        matched = {(p.dim, p.birth_vertex, p.death_vertex): p for p in b.pairs}
        for p in a.pairs:
            q = matched[(p.dim, p.birth_vertex, p.death_vertex)]
            assert abs(q.birth - p.birth) <= delta
            if p.is_infinite:
                assert q.is_infinite
            else:
                assert abs(q.death - p.death) <= delta

    def test_euler_identity(self, rng):
        """chi(K^t) = b0 - b1 + b2 at every threshold."""
        grid = grid_of(rng.random((4, 4, 5)))
        diagram = compute_persistence(grid, method="reduction")
        for t in np.linspace(-0.1, 1.1, 25):
            b0, b1, b2 = betti_at(diagram, t)
            assert euler_characteristic(grid, t) == b0 - b1 + b2

    def test_inverse_mapping(self, rng):
        """Birth and death values are the values of the recorded vertices."""
        grid = grid_of(rng.random((6, 6, 6)), upper=3.0)
        diagram = compute_persistence(grid, method="fast")
        for p in diagram.pairs:
            assert grid.values[p.birth_vertex] == p.birth
            assert p.birth_point == grid.point(p.birth_vertex)
            if not p.is_infinite:
                assert grid.values[p.death_vertex] == p.death
                assert p.death_point == grid.point(p.death_vertex)

    def test_no_zero_persistence_pairs(self):
        """Pairs born and killed at the same value are dropped."""
        grid = grid_of(np.random.default_rng(11).integers(0, 3, (4, 4, 4)))
        diagram = compute_persistence(grid, method="reduction")
        assert all(p.death > p.birth for p in diagram.pairs)

    def test_scale_equivariance(self, rng):
        """Scaling all values by 2 scales every birth and death by 2."""
        values = rng.random((5, 5, 5))
        a = compute_persistence(grid_of(values), method="fast")
        b = compute_persistence(grid_of(2.0 * values), method="fast")
        assert [(p.birth * 2.0, p.death * 2.0) for p in a.pairs] == [
            (p.birth, p.death) for p in b.pairs
        ]


class TestDiagramCsv:
    """Tests for diagram CSV files."""

    def test_write_then_read(self, rng, tmp_path):
        """Pairs survive a CSV round trip, vertices recovered from positions."""
        box = Box.cube(4.0)
        grid = FiltrationGrid(values=rng.random((6, 7, 8)), box=box)
        diagram = compute_persistence(grid, method="fast")
        path = tmp_path / "diagram.csv"
        write_diagram_csv(diagram, path)
        loaded = read_diagram_csv(path, box, grid.dims)
        assert loaded.pairs == diagram.pairs

    def test_infinite_death_is_empty(self, ring_grid, tmp_path):
        """Infinite pairs leave the death columns empty."""
        path = tmp_path / "diagram.csv"
        write_diagram_csv(compute_persistence(ring_grid), path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "dim,birth,death,bx,by,bz,dx,dy,dz"
        assert any(line.startswith("0,0.0,,") for line in lines[1:])

    def test_bad_header(self, tmp_path):
        """Files with another header are rejected."""
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(ArtifactIOError):
            read_diagram_csv(path, Box.cube(1.0), (2, 2, 2))
