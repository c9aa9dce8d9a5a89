"""Effective threshold and density ranges of a sublevel solid.

The effective threshold range is the half-open interval of thresholds for
which the solid is one connected component without enclosed cavities:
from the last component merge (largest kept finite 0-dim death) up to the
first cavity (smallest 2-dim birth). Components that are not repeated by
neighbouring units are filtered out first.
"""

import logging
import math
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool

import numpy as np
from scipy.spatial import cKDTree

from tpms_etr.exceptions import DomainError
from tpms_etr.mesh import enclosed_volume, mesh_levels, sample_levels
from tpms_etr.models.persistence import PersistenceDiagram, PersistencePair
from tpms_etr.models.reports import DeterminingPairs, EtrReport
from tpms_etr.models.tpms import Box, ScalarField
from tpms_etr.persistence import Engine, build_filtration, compute_persistence

logger = logging.getLogger(__name__)

MIN_MESH_RESOLUTION = 8


# =============================================================================
# Pair Filtering and Ordering
# =============================================================================

@dataclass(frozen=True)
class PairOrdering:
    """Kept pairs in the order the range endpoints are read from."""

    by_death_desc: list[PersistencePair]
    by_birth_asc: list[PersistencePair]


def filter_repetitive(
    pairs: list[PersistencePair], epsilon: float = 0.1, sigma: int = 1
) -> tuple[list[PersistencePair], list[PersistencePair]]:
    """Split pairs into repeated (kept) and isolated (filtered) ones.

    A finite pair is kept when more than `sigma` pairs of its dimension,
    itself included, lie in the closed Euclidean ball of radius `epsilon`
    around it in the (birth, death) plane. Infinite pairs are always kept.

    Args:
        pairs: Pairs of any dimensions.
        epsilon: Neighbourhood radius (> 0).
        sigma: Multiplicity threshold (>= 1).

    Returns:
        (kept, filtered), each in input order.
    """
    if epsilon <= 0 or sigma < 1:
        raise DomainError("filter needs epsilon > 0 and sigma >= 1")

    keep = [True] * len(pairs)
    for dim in {p.dim for p in pairs}:
        members = [i for i, p in enumerate(pairs) if p.dim == dim and not p.is_infinite]
        if not members:
            continue
        points = np.array([(pairs[i].birth, pairs[i].death) for i in members])
        counts = cKDTree(points).query_ball_point(points, r=epsilon, return_length=True)
        for i, count in zip(members, counts):
            keep[i] = int(count) > sigma

    kept = [p for p, k in zip(pairs, keep) if k]
    filtered = [p for p, k in zip(pairs, keep) if not k]
    return kept, filtered


def split_boundary(
    pairs: list[PersistencePair],
    grid_dims: tuple[int, int, int] | None,
    epsilon: float = 0.1,
) -> tuple[list[PersistencePair], list[PersistencePair]]:
    """Separate short-lived 0-dim pairs born on a face of the sampled box.

    The box cuts the periodic field, so local minima of a face restriction
    appear as components that merge almost at once. A finite 0-dim pair is
    a boundary artefact when its birth vertex has a coordinate 0 or n-1 and
    its persistence is below `epsilon`.

    Returns:
        (interior, boundary), each in input order.
    """
    if grid_dims is None:
        return list(pairs), []

    last = np.asarray(grid_dims) - 1

    def on_face(pair: PersistencePair) -> bool:
        vertex = np.asarray(pair.birth_vertex)
        return bool(np.any(vertex == 0) or np.any(vertex == last))

    boundary = [
        p for p in pairs
        if p.dim == 0 and not p.is_infinite and p.persistence < epsilon and on_face(p)
    ]
    dropped = {id(p) for p in boundary}
    return [p for p in pairs if id(p) not in dropped], boundary


def order_pairs(kept: list[PersistencePair]) -> PairOrdering:
    """Finite 0-dim pairs by descending death and 2-dim pairs by ascending birth."""
    components = [p for p in kept if p.dim == 0 and not p.is_infinite]
    cavities = [p for p in kept if p.dim == 2]
    return PairOrdering(
        by_death_desc=sorted(components, key=lambda p: (-p.death, p.birth)),
        by_birth_asc=sorted(cavities, key=lambda p: (p.birth, p.death)),
    )


@dataclass
class EtrExtraction:
    """Range endpoints read from a diagram, with the pairs that fix them."""

    c_min: float
    c_max: float
    determining: DeterminingPairs
    kept: list[PersistencePair] = field(default_factory=list)
    filtered: list[PersistencePair] = field(default_factory=list)
    boundary: list[PersistencePair] = field(default_factory=list)
    degenerate: bool = False

    @property
    def etr(self) -> tuple[float, float]:
        return self.c_min, self.c_max


def extract_etr(
    diagram: PersistenceDiagram,
    epsilon: float = 0.1,
    sigma: int = 1,
    value_range: tuple[float, float] | None = None,
) -> EtrExtraction:
    """Effective threshold range [c_min, c_max) of a diagram.

    Short-lived 0-dim pairs born on the box faces are set aside first (see
    `split_boundary`). Isolated 0-dim pairs are excluded from the ordering.
    Isolated 2-dim pairs only trigger a warning.

    Args:
        diagram: Persistence diagram with dimensions 0 and 2.
        epsilon: Repetition filter radius.
        sigma: Repetition filter multiplicity.
        value_range: (min, max) of the sampled values, used when no kept pair
            fixes an endpoint. Defaults to the extreme pair values.

    Returns:
        The extraction; `degenerate` is set when neither a component merge nor
        a cavity exists, or when the range is empty.
    """
    interior, boundary = split_boundary(diagram.pairs, diagram.grid_dims, epsilon)
    if boundary:
        logger.debug(f"{len(boundary)} short-lived 0-dim pair(s) born on the box boundary")
    kept, filtered = filter_repetitive(interior, epsilon, sigma)
    # Cavities survive splicing; only lone components are dropped from the ordering.
    lone_cavities = [p for p in filtered if p.dim == 2]
    if lone_cavities:
        logger.warning(f"{len(lone_cavities)} 2-dim pair(s) without an epsilon-neighbour, "
                       f"first at ({lone_cavities[0].birth:.4f}, {lone_cavities[0].death:.4f}); "
                       "kept for the upper endpoint")
        kept = kept + lone_cavities
        filtered = [p for p in filtered if p.dim != 2]

    if value_range is None:
        finite = [v for p in diagram.pairs for v in (p.birth, p.death) if math.isfinite(v)]
        value_range = (min(finite), max(finite)) if finite else (0.0, 0.0)
    lowest, highest = value_range

    ordering = order_pairs(kept)
    component = ordering.by_death_desc[0] if ordering.by_death_desc else None
    cavity = ordering.by_birth_asc[0] if ordering.by_birth_asc else None
    c_min = component.death if component else lowest
    c_max = cavity.birth if cavity else highest

    degenerate = component is None and cavity is None
    if degenerate:
        logger.warning("No component merge and no cavity: reporting the full value range")
    elif c_min >= c_max:
        degenerate = True
        logger.warning(f"Empty effective range: last merge {c_min:.4f} >= first cavity "
                       f"{c_max:.4f}")

    return EtrExtraction(
        c_min=c_min,
        c_max=c_max,
        determining=DeterminingPairs(component=component, cavity=cavity),
        kept=kept,
        filtered=filtered,
        boundary=boundary,
        degenerate=degenerate,
    )


# =============================================================================
# Densities
# =============================================================================

def _density(levels: np.ndarray, box: Box, c: float) -> float:
    volume = enclosed_volume(mesh_levels(levels, box, c))
    return float(np.clip(volume / box.volume, 0.0, 1.0))


def density_at(field: ScalarField, box: Box, c: float, mesh_resolution: int = 96) -> float:
    """Relative density of {field <= c}: meshed enclosed volume over box volume.

    Raises:
        DomainError: If the mesh resolution is below 8.
    """
    if mesh_resolution < MIN_MESH_RESOLUTION:
        raise DomainError(f"mesh resolution must be >= {MIN_MESH_RESOLUTION}")
    return _density(sample_levels(field, box, mesh_resolution), box, c)


def density_sweep(
    field: ScalarField,
    box: Box,
    thresholds: list[float],
    mesh_resolution: int = 96,
    threads: int | None = None,
) -> list[tuple[float, float]]:
    """Relative densities at several thresholds from one sampling of the field.

    Args:
        field: Scalar field.
        box: Design domain.
        thresholds: Thresholds, evaluated in the given order.
        mesh_resolution: Grid vertices per axis.
        threads: Worker threads (None or 1 runs serially).

    Returns:
        (threshold, density) pairs in input order.
    """
    if mesh_resolution < MIN_MESH_RESOLUTION:
        raise DomainError(f"mesh resolution must be >= {MIN_MESH_RESOLUTION}")
    levels = sample_levels(field, box, mesh_resolution)
    cs = [float(c) for c in thresholds]
    if threads and threads > 1 and len(cs) > 1:
        with ThreadPool(min(threads, len(cs))) as pool:
            densities = pool.map(lambda c: _density(levels, box, c), cs)
    else:
        densities = [_density(levels, box, c) for c in cs]
    return list(zip(cs, densities))


def extract_edr(
    field: ScalarField, box: Box, etr: tuple[float, float], mesh_resolution: int = 96
) -> tuple[float, float]:
    """Relative densities at both (closed) ETR endpoints."""
    (_, rho_min), (_, rho_max) = density_sweep(field, box, list(etr), mesh_resolution)
    return rho_min, rho_max


# =============================================================================
# Full Analysis
# =============================================================================

def analyze_field(
    field: ScalarField,
    box: Box | None = None,
    grid: int = 64,
    mesh_resolution: int = 96,
    epsilon: float = 0.1,
    sigma: int = 1,
    method: Engine = "auto",
    sweep_steps: int = 0,
    threads: int | None = None,
) -> tuple[EtrReport, PersistenceDiagram]:
    """Persistence, repetition filter, ETR and EDR of a field over its analysis box.

    Args:
        field: Scalar field; without `box` it must provide `analysis_box()`.
        box: Analysis box, 2x2x2 units by default.
        grid: Persistence vertices per axis.
        mesh_resolution: Marching tetrahedra vertices per axis.
        epsilon: Repetition filter radius.
        sigma: Repetition filter multiplicity.
        method: Persistence engine.
        sweep_steps: Extra density samples between the ETR endpoints (0 for none).
        threads: Worker threads for density meshing.

    Returns:
        (report, diagram).
    """
    if box is None:
        if not hasattr(field, "analysis_box"):
            raise DomainError("field has no default analysis box; pass one explicitly")
        box = field.analysis_box()

    filtration = build_filtration(field, box, (grid, grid, grid))
    diagram = compute_persistence(filtration, method=method, dimensions=(0, 2))
    extraction = extract_etr(
        diagram, epsilon, sigma,
        value_range=(float(filtration.values.min()), float(filtration.values.max())),
    )

    c_min, c_max = extraction.etr
    thresholds = [c_min, c_max]
    if sweep_steps > 0 and c_max > c_min:
        thresholds = np.linspace(c_min, c_max, sweep_steps + 2).tolist()
    samples = density_sweep(field, box, thresholds, mesh_resolution, threads)
    edr = (samples[0][1], samples[-1][1])

    logger.info(f"ETR [{c_min:.4f}, {c_max:.4f}), EDR [{edr[0]:.4f}, {edr[1]:.4f}], "
                f"{len(extraction.filtered)} pair(s) filtered")

    report = EtrReport(
        etr=(c_min, c_max),
        edr=edr,
        density_samples=samples,
        determining_pairs=extraction.determining,
        filtered_pairs=extraction.filtered,
        filtered_count=len(extraction.filtered),
        boundary_count=len(extraction.boundary),
        degenerate=extraction.degenerate,
        grid_dims=filtration.dims,
        mesh_resolution=mesh_resolution,
        epsilon=epsilon,
        sigma=sigma,
    )
    return report, diagram
