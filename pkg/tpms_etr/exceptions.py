"""Exception hierarchy for tpms_etr.

Numerical non-convergence (LSPIA, optimizer divergence) is reported through
result flags, not exceptions.
"""

from pathlib import Path


class TpmsEtrError(Exception):
    """Base class for all library errors."""


class DomainError(TpmsEtrError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class NonFiniteSampleError(DomainError):
    """A sampled field value is NaN or infinite."""

    def __init__(self, index: tuple[int, ...], point: tuple[float, ...] | None = None) -> None:
        self.index = index
        self.point = point
        location = f" at {point}" if point is not None else ""
        super().__init__(f"Non-finite field value at sample {index}{location}")


class OpenMeshError(TpmsEtrError):
    """A mesh expected to be closed has boundary edges."""

    def __init__(self, boundary_edges: int) -> None:
        self.boundary_edges = boundary_edges
        super().__init__(f"Mesh is not closed: {boundary_edges} boundary edges")


class SimilaritySampleError(TpmsEtrError):
    """No sample survived the effective-region filter."""


class ArtifactIOError(TpmsEtrError, OSError):
    """Reading or writing an artifact failed."""

    def __init__(self, path: str | Path, reason: str) -> None:
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")
