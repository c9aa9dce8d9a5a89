"""Pydantic models for run configuration and serialized artifacts.

Artifacts:
- SplineDocument: trivariate B-spline JSON
- FitReport: fitting summary
- EtrReport: effective threshold / density ranges
- OptimizationTrace: per-iteration optimizer records
- RunManifest: provenance written next to every CLI output
"""

from datetime import datetime
from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator

from tpms_etr.models.persistence import PersistencePair
from tpms_etr.models.tpms import SolidType, TpmsKind


# =============================================================================
# Spline Documents
# =============================================================================

class Symmetry(str, Enum):
    """How a fitted unit is extended to all of space."""

    HALF_UNIT_REFLECTIVE = "half_unit_reflective"
    HALF_UNIT_ROTATIONAL = "half_unit_rotational"
    COMPLETE_UNIT_PERIODIC = "complete_unit_periodic"

    @property
    def is_half_unit(self) -> bool:
        """Whether the spline covers a half unit (period 2, TPMS scale pi)."""
        return self is not Symmetry.COMPLETE_UNIT_PERIODIC


class ReferenceTpms(BaseModel):
    """Nodal field and solid type a spline was fitted to."""

    kind: TpmsKind
    solid: SolidType = SolidType.ROD
    frequencies: tuple[float, float, float] = (1.0, 1.0, 1.0)


class SplineDocument(BaseModel):
    """JSON form of a trivariate B-spline (coefficients flattened k-fastest)."""

    degrees: tuple[int, int, int] = Field(..., description="Degree per axis")
    knots: list[list[float]] = Field(..., min_length=3, max_length=3, description="Knot vectors")
    dims: tuple[int, int, int] = Field(..., description="Coefficient lattice dimensions")
    coefficients: list[float] = Field(..., description="Coefficients, k index varying fastest")
    symmetry: Symmetry | None = Field(None, description="Extension used by the stored field")
    reference: ReferenceTpms | None = Field(None, description="Field the spline approximates")


class FitReport(BaseModel):
    """Summary of a fitting run."""

    method: str = Field(..., description="partial or complete")
    mse: float = Field(..., description="Mean squared error over the fitted samples")
    iterations: int = Field(..., description="LSPIA iterations performed")
    converged: bool = Field(..., description="Whether the relative MSE improvement fell below tol")
    lattice_dims: tuple[int, int, int]
    samples: int


# =============================================================================
# ETR Reports
# =============================================================================

class DeterminingPairs(BaseModel):
    """Pairs whose values fix the ETR endpoints."""

    component: PersistencePair | None = Field(
        None, description="0-dim pair with the largest finite death (lower endpoint)"
    )
    cavity: PersistencePair | None = Field(
        None, description="2-dim pair with the smallest birth (upper endpoint)"
    )


class EtrReport(BaseModel):
    """Effective threshold range and the density range it maps to."""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    etr: tuple[float, float] = Field(..., description="Half-open threshold range [c_min, c_max)")
    edr: tuple[float, float] | None = Field(None, description="Relative density range")
    density_samples: list[tuple[float, float]] = Field(
        default_factory=list, description="(threshold, density) samples, ascending threshold"
    )
    determining_pairs: DeterminingPairs = Field(default_factory=DeterminingPairs)
    filtered_pairs: list[PersistencePair] = Field(
        default_factory=list, description="Pairs excluded as non-repetitive"
    )
    filtered_count: int = Field(default=0)
    boundary_count: int = Field(
        default=0, description="Short-lived 0-dim pairs born on the box boundary, excluded"
    )
    degenerate: bool = Field(default=False, description="No component merge and no cavity found")
    grid_dims: tuple[int, int, int] | None = None
    mesh_resolution: int | None = None
    epsilon: float = 0.1
    sigma: int = 1

    @property
    def length(self) -> float:
        """ETR length c_max - c_min."""
        return self.etr[1] - self.etr[0]


# =============================================================================
# Optimizer Models
# =============================================================================

class LossMode(str, Enum):
    """Topological loss variant."""

    BOUNDED = "bounded"
    UNBOUNDED = "unbounded"


class OptimizerConfig(BaseModel):
    """Settings of one ETR extension run."""

    expansion_ratio: float = Field(0.5, ge=0.0, description="mu: fraction of l0 added per end")
    weight: float = Field(0.5, ge=0.0, le=1.0, description="alpha: similarity weight")
    learning_rate: float = Field(0.3, gt=0.0, description="eta: adaptive gradient step")
    max_iters: int = Field(500, ge=1)
    convergence_tol: float = Field(1e-6, gt=0.0)
    convergence_window: int = Field(5, ge=1, description="Iterations |dL| must stay below tol")
    divergence_factor: float = Field(10.0, gt=1.0, description="Abort when L exceeds this x L0")
    persistence_grid: int = Field(64, ge=2, description="Vertices per axis on the 2x2x2-unit box")
    indicator_resolution: int = Field(60, ge=2, description="I: indicator samples per axis")
    quadrature_resolution: int = Field(48, ge=1, description="Midpoint cells per axis")
    mesh_resolution: int = Field(96, ge=8)
    epsilon: float = Field(0.1, gt=0.0)
    sigma: int = Field(1, ge=1)
    similarity_samples: int = Field(100_000, ge=1000, description="N for E_sim")
    seed: int = 0
    loss_mode: LossMode = LossMode.BOUNDED


class IterationRecord(BaseModel):
    """Losses and ETR endpoints observed at one iteration."""

    iteration: int
    loss: float
    loss_top: float
    loss_sim: float
    d1_0: float | None = Field(None, description="Largest kept finite 0-dim death")
    b0_2: float | None = Field(None, description="Smallest kept 2-dim birth (or max value)")
    note: str | None = None


class TraceStatus(str, Enum):
    """How an optimization run ended."""

    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


class OptimizationTrace(BaseModel):
    """Full record of an optimization run."""

    records: list[IterationRecord] = Field(default_factory=list)
    status: TraceStatus = TraceStatus.MAX_ITERS
    targets: tuple[float, float] = Field(..., description="(c_min, c_max) targets")
    initial_etr: tuple[float, float]
    final_report: EtrReport | None = None
    e_sim: float | None = None


# =============================================================================
# Run Manifest
# =============================================================================

class RunManifest(BaseModel):
    """Provenance of one CLI command."""

    command: str
    config: dict[str, Any] = Field(default_factory=dict)
    inputs: list[str] = Field(default_factory=list)
    outputs: list[str] = Field(default_factory=list)
    tool_version: str
    started_at: datetime
    wall_time: float = Field(0.0, description="Seconds")
    seed: int = 0
    exit_code: int = 0

    @field_validator("outputs", "inputs")
    @classmethod
    def sort_paths(cls, v: list[str]) -> list[str]:
        """Keep path lists in a stable order."""
        return sorted(v)
