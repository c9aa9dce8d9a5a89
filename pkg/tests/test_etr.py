"""Tests for repetition filtering, ETR extraction and density ranges."""

import math

import numpy as np
import pytest

from tpms_etr.etr import (
    analyze_field,
    density_at,
    density_sweep,
    extract_edr,
    extract_etr,
    filter_repetitive,
    order_pairs,
    split_boundary,
)
from tpms_etr.exceptions import DomainError
from tpms_etr.models.persistence import PersistenceDiagram, PersistencePair
from tpms_etr.models.tpms import Box, NodalField, SolidType, TpmsKind
from tpms_etr.nodal import RodField
from tpms_etr.spline import ExtendedField, TrivariateSpline


def make_pair(dim, birth, death=math.inf, vertex=(0, 0, 0)):
    """Pair with placeholder generating vertices."""
    finite = math.isfinite(death)
    return PersistencePair(
        dim=dim,
        birth=birth,
        death=death,
        birth_vertex=vertex,
        death_vertex=vertex if finite else None,
        birth_point=tuple(float(v) for v in vertex),
        death_point=tuple(float(v) for v in vertex) if finite else None,
    )


@pytest.fixture
def repeated_diagram():
    """Seven repeated merges, one lone merge, two repeated cavities and one infinite pair."""
    pairs = [make_pair(0, -3.3)]
    pairs += [make_pair(0, -3.3, -1.11, (i, 0, 0)) for i in range(7)]
    pairs.append(make_pair(0, -1.3, 0.4))
    pairs += [make_pair(2, 1.1, 3.3, (i, 1, 1)) for i in range(2)]
    return PersistenceDiagram(pairs=pairs, dimensions=(0, 2))


class TestFilterRepetitive:
    """Tests for the epsilon/sigma repetition filter."""

    def test_identical_pairs_kept(self):
        """Eight coincident pairs all see each other."""
        pairs = [make_pair(0, -1.1, -0.9, (i, 0, 0)) for i in range(8)]
        kept, filtered = filter_repetitive(pairs, 0.1, 1)
        assert kept == pairs
        assert filtered == []

    def test_isolated_pair_filtered(self):
        """A pair 0.5 away from its nearest neighbour is filtered."""
        lone = make_pair(0, -1.3, 0.4)
        others = [make_pair(0, -1.3, -0.1, (i, 0, 0)) for i in range(2)]
        kept, filtered = filter_repetitive([lone, *others], 0.1, 1)
        assert filtered == [lone]
        assert kept == others

    def test_closed_ball(self):
        """Two pairs exactly epsilon apart keep each other."""
        pairs = [make_pair(0, 0.0, 1.0), make_pair(0, 0.0, 1.5, (1, 0, 0))]
        kept, _ = filter_repetitive(pairs, 0.5, 1)
        assert kept == pairs

    def test_sigma_raises_the_bar(self):
        """With sigma 2 a pair needs two neighbours besides itself."""
        pairs = [make_pair(0, 0.0, 1.0), make_pair(0, 0.0, 1.0, (1, 0, 0))]
        kept, filtered = filter_repetitive(pairs, 0.1, 2)
        assert kept == []
        assert filtered == pairs

    def test_dimensions_counted_separately(self):
        """A 2-dim pair does not make a 0-dim pair repetitive."""
        zero, two = make_pair(0, 0.0, 1.0), make_pair(2, 0.0, 1.0)
        _, filtered = filter_repetitive([zero, two], 0.1, 1)
        assert filtered == [zero, two]

    def test_infinite_pairs_kept(self):
        """The essential pair survives without neighbours."""
        essential = make_pair(0, -2.0)
        kept, _ = filter_repetitive([essential], 0.1, 1)
        assert kept == [essential]

    def test_idempotent(self, repeated_diagram):
        """Filtering the kept pairs again removes nothing."""
        kept, filtered = filter_repetitive(repeated_diagram.pairs)
        again, removed = filter_repetitive(kept)
        assert again == kept
        assert removed == []
        assert len(kept) + len(filtered) == len(repeated_diagram.pairs)

    def test_invalid_parameters(self):
        """Non-positive epsilon and zero sigma are rejected."""
        with pytest.raises(DomainError):
            filter_repetitive([], 0.0, 1)
        with pytest.raises(DomainError):
            filter_repetitive([], 0.1, 0)


class TestExtractEtr:
    """Tests for reading the range endpoints."""

    def test_order_pairs(self, repeated_diagram):
        """Components descend by death, cavities ascend by birth, infinite pairs excluded."""
        ordering = order_pairs(repeated_diagram.pairs)
        deaths = [p.death for p in ordering.by_death_desc]
        assert deaths == sorted(deaths, reverse=True)
        assert all(math.isfinite(d) for d in deaths)
        assert [p.birth for p in ordering.by_birth_asc] == [1.1, 1.1]

    def test_endpoints_ignore_lone_component(self, repeated_diagram):
        """The lone merge at 0.4 does not set c_min."""
        extraction = extract_etr(repeated_diagram)
        assert extraction.etr == (-1.11, 1.1)
        assert extraction.determining.component.death == -1.11
        assert extraction.determining.cavity.birth == 1.1
        assert [(p.birth, p.death) for p in extraction.filtered] == [(-1.3, 0.4)]
        assert not extraction.degenerate

    def test_lone_cavity_still_bounds(self, caplog):
        """A cavity without neighbours still sets c_max and is logged."""
        pairs = [make_pair(0, -3.0)]
        pairs += [make_pair(0, -3.0, -1.0, (i, 0, 0)) for i in range(3)]
        pairs.append(make_pair(2, 1.0, 3.0))
        extraction = extract_etr(PersistenceDiagram(pairs=pairs))
        assert extraction.etr == (-1.0, 1.0)
        assert extraction.filtered == []
        assert "2-dim pair" in caplog.text

    def test_no_cavity_uses_maximum(self):
        """Without 2-dim pairs c_max is the largest sampled value."""
        pairs = [make_pair(0, -3.0), make_pair(0, -2.0, -1.0), make_pair(0, -2.0, -1.0, (1, 0, 0))]
        extraction = extract_etr(PersistenceDiagram(pairs=pairs), value_range=(-3.0, 5.0))
        assert extraction.etr == (-1.0, 5.0)
        assert extraction.determining.cavity is None

    def test_contractible_is_degenerate(self, caplog):
        """A single component without cavities reports the full range."""
        extraction = extract_etr(PersistenceDiagram(pairs=[make_pair(0, -1.0)]),
                                 value_range=(-1.0, 2.0))
        assert extraction.degenerate
        assert extraction.etr == (-1.0, 2.0)
        assert "full value range" in caplog.text

    def test_empty_range_is_degenerate(self):
        """A last merge above the first cavity flags the range as empty."""
        pairs = [make_pair(0, -3.0), make_pair(0, -2.0, 1.5), make_pair(0, -2.0, 1.5, (1, 0, 0)),
                 make_pair(2, 1.0, 2.0), make_pair(2, 1.0, 2.0, (1, 0, 0))]
        extraction = extract_etr(PersistenceDiagram(pairs=pairs))
        assert extraction.degenerate


class TestBoundaryPairs:
    """Tests for short-lived components born on the faces of the sampled box."""

    @pytest.fixture
    def face_diagram(self):
        """Repeated interior merges at -1.11 and three face minima merging at once."""
        pairs = [make_pair(0, -3.33, vertex=(4, 4, 4))]
        pairs += [make_pair(0, -3.33, -1.11, (2 + i, 4, 4)) for i in range(4)]
        pairs += [make_pair(0, -1.0, -0.99, (0, 5, 7)) for _ in range(3)]
        pairs += [make_pair(2, 1.1, 3.3, (4, 4, i + 2)) for i in range(2)]
        return PersistenceDiagram(pairs=pairs, dimensions=(0, 2), grid_dims=(9, 9, 9))

    def test_face_minima_do_not_set_c_min(self, face_diagram):
        """Repeated face artefacts are set aside before the last merge is read."""
        extraction = extract_etr(face_diagram)
        assert extraction.etr == (-1.11, 1.1)
        assert len(extraction.boundary) == 3
        assert all(p.birth_vertex == (0, 5, 7) for p in extraction.boundary)
        assert extraction.filtered == []

    def test_long_lived_face_pair_kept(self):
        """Face-born pairs at least epsilon long are ordinary pairs."""
        pairs = [make_pair(0, -2.0, -0.5, (0, 3, 3)), make_pair(0, -2.0, -0.5, (8, 3, 3))]
        interior, boundary = split_boundary(pairs, (9, 9, 9), epsilon=0.1)
        assert boundary == []
        assert interior == pairs

    def test_upper_face_and_interior(self):
        """Index n-1 counts as a face; interior vertices never do."""
        face = make_pair(0, -1.0, -0.98, (3, 8, 3))
        inner = make_pair(0, -1.0, -0.98, (3, 7, 3))
        interior, boundary = split_boundary([face, inner], (9, 9, 9), epsilon=0.1)
        assert boundary == [face]
        assert interior == [inner]

    def test_cavities_and_essential_pairs_untouched(self):
        """Only finite 0-dim pairs are candidates."""
        pairs = [make_pair(0, -1.0, vertex=(0, 0, 0)), make_pair(2, 1.0, 1.01, (0, 0, 0))]
        interior, boundary = split_boundary(pairs, (9, 9, 9))
        assert boundary == []
        assert interior == pairs

    def test_without_grid_dims(self, repeated_diagram):
        """Diagrams without grid dimensions are left as they are."""
        interior, boundary = split_boundary(repeated_diagram.pairs, None)
        assert boundary == []
        assert len(interior) == len(repeated_diagram.pairs)


class TestDensity:
    """Tests for relative densities."""

    def test_ball_density(self, sphere_field, unit_box):
        """The density of a ball is its volume over the box volume."""
        rho = density_at(sphere_field, unit_box, 0.09, mesh_resolution=41)
        assert rho == pytest.approx(4.0 / 3.0 * math.pi * 0.027, rel=0.02)

    def test_extremes(self, sphere_field, unit_box):
        """Below the minimum the density is 0, above the maximum it is 1."""
        assert density_at(sphere_field, unit_box, -1.0, 9) == 0.0
        assert density_at(sphere_field, unit_box, 10.0, 9) == pytest.approx(1.0)

    def test_resolution_floor(self, sphere_field, unit_box):
        """Fewer than 8 samples per axis is rejected."""
        with pytest.raises(DomainError):
            density_at(sphere_field, unit_box, 0.1, mesh_resolution=7)

    def test_sweep_monotone_and_threaded(self, p_rod):
        """Densities do not decrease with c and threads do not change them."""
        box = p_rod.analysis_box()
        thresholds = np.linspace(-3.5, 3.5, 20).tolist()
        serial = density_sweep(p_rod, box, thresholds, mesh_resolution=17)
        threaded = density_sweep(p_rod, box, thresholds, mesh_resolution=17, threads=3)
        assert serial == threaded
        densities = [rho for _, rho in serial]
        assert np.all(np.diff(densities) >= -1e-12)
        assert densities[0] == 0.0
        assert densities[-1] == pytest.approx(1.0)

    @pytest.mark.parametrize("kind", [TpmsKind.D, TpmsKind.G, TpmsKind.IWP])
    def test_sweep_monotone_per_kind(self, kind):
        """A 20-step sweep over the full value range never loses density."""
        rod = RodField(NodalField(kind=kind), SolidType.ROD)
        thresholds = np.linspace(-5.0, 5.0, 20).tolist()
        densities = [rho for _, rho in density_sweep(rod, rod.analysis_box(), thresholds, 17)]
        assert np.all(np.diff(densities) >= -1e-9 * np.maximum(densities[1:], 1.0))
        assert densities[0] == 0.0
        assert densities[-1] == pytest.approx(1.0)

    def test_edr_endpoints(self, slab_field, unit_box):
        """For slabs the density equals the threshold."""
        rho_min, rho_max = extract_edr(slab_field, unit_box, (0.25, 0.65), mesh_resolution=9)
        assert rho_min == pytest.approx(0.25, abs=1e-9)
        assert rho_max == pytest.approx(0.65, abs=1e-9)


class TestAnalyzeField:
    """End-to-end ETR and EDR analysis."""

    def test_p_on_exact_lattice(self, p_rod):
        """Sampling P where saddles fall on grid vertices gives +-1/0.9 exactly."""
        report, diagram = analyze_field(p_rod, grid=33, mesh_resolution=24)
        assert report.etr[0] == pytest.approx(-1.0 / 0.9, abs=1e-9)
        assert report.etr[1] == pytest.approx(1.0 / 0.9, abs=1e-9)
        assert report.edr[0] == pytest.approx(0.207, abs=0.03)
        assert report.edr[1] == pytest.approx(0.776, abs=0.03)
        assert report.grid_dims == (33, 33, 33)
        assert diagram.dimensions == (0, 2)
        assert not report.degenerate

    def test_sweep_samples(self, p_rod):
        """Extra sweep steps land between the endpoints in ascending order."""
        report, _ = analyze_field(p_rod, grid=17, mesh_resolution=16, sweep_steps=3)
        cs = [c for c, _ in report.density_samples]
        assert len(cs) == 5
        assert cs == sorted(cs)
        assert (cs[0], cs[-1]) == report.etr

    def test_scale_equivariance(self, p_nodal):
        """Scaling the field by 2 doubles both endpoints."""

        class Doubled(RodField):
            def evaluate_grid(self, xs, ys, zs):
                return 2.0 * super().evaluate_grid(xs, ys, zs)

        base, _ = analyze_field(RodField(p_nodal), grid=17, mesh_resolution=16)
        doubled, _ = analyze_field(Doubled(p_nodal), grid=17, mesh_resolution=16)
        assert doubled.etr == pytest.approx((2.0 * base.etr[0], 2.0 * base.etr[1]))

    def test_constant_field_degenerate(self):
        """A constant spline has no features and reports a degenerate range."""
        field = ExtendedField(TrivariateSpline.uniform((4, 4, 4)))
        report, _ = analyze_field(field, grid=9, mesh_resolution=8)
        assert report.degenerate
        assert report.etr == (0.0, 0.0)

    def test_needs_a_box(self, sphere_field):
        """Fields without an analysis box need one passed in."""
        with pytest.raises(DomainError):
            analyze_field(sphere_field, grid=5)

    def test_report_serializes(self, p_rod):
        """The report round-trips through JSON."""
        report, _ = analyze_field(p_rod, box=Box.cube(4.0 * math.pi), grid=9, mesh_resolution=8)
        restored = type(report).model_validate_json(report.model_dump_json())
        assert restored.etr == report.etr
        assert restored.filtered_count == report.filtered_count


@pytest.mark.slow
class TestAcceptance:
    """Full-resolution ranges of the nodal P and G rods."""

    def test_p_rod(self, p_rod):
        """P: ETR [-1.113, 1.105] and EDR [0.207, 0.776]."""
        report, _ = analyze_field(p_rod, grid=64, mesh_resolution=96)
        assert report.etr[0] == pytest.approx(-1.113, abs=0.02)
        assert report.etr[1] == pytest.approx(1.105, abs=0.02)
        assert report.edr[0] == pytest.approx(0.207, abs=0.01)
        assert report.edr[1] == pytest.approx(0.776, abs=0.01)

    def test_g_rod(self):
        """G: the saddle range +-sqrt(2)/0.9 (+-1.41 before the 0.9 divisor), two lone pairs."""
        report, _ = analyze_field(RodField(NodalField(kind=TpmsKind.G), SolidType.ROD),
                                  grid=64, mesh_resolution=96)
        assert 0.9 * report.etr[0] == pytest.approx(-1.41, abs=0.02)
        assert 0.9 * report.etr[1] == pytest.approx(1.40, abs=0.02)
        assert report.boundary_count > 0
        assert report.edr[0] == pytest.approx(0.018, abs=0.015)
        assert report.edr[1] == pytest.approx(0.979, abs=0.015)
        assert [p.dim for p in report.filtered_pairs] == [0, 0]
