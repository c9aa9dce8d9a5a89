"""Data models for tpms_etr.

This package contains:
- tpms.py: nodal field, solid type and box models, scalar field protocol
- persistence.py: persistent pairs and diagrams
- reports.py: spline documents, ETR reports, optimizer config/trace, run manifests
"""

from tpms_etr.models.persistence import PersistenceDiagram, PersistencePair
from tpms_etr.models.reports import (
    DeterminingPairs,
    EtrReport,
    FitReport,
    IterationRecord,
    LossMode,
    OptimizationTrace,
    OptimizerConfig,
    ReferenceTpms,
    RunManifest,
    SplineDocument,
    Symmetry,
    TraceStatus,
)
from tpms_etr.models.tpms import Box, NodalField, ScalarField, SolidType, TpmsKind

__all__ = [
    # Field models
    "Box",
    "NodalField",
    "ScalarField",
    "SolidType",
    "TpmsKind",
    # Persistence models
    "PersistenceDiagram",
    "PersistencePair",
    # Report models
    "DeterminingPairs",
    "EtrReport",
    "FitReport",
    "IterationRecord",
    "LossMode",
    "OptimizationTrace",
    "OptimizerConfig",
    "ReferenceTpms",
    "RunManifest",
    "SplineDocument",
    "Symmetry",
    "TraceStatus",
]
