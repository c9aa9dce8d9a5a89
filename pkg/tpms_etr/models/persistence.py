"""Pydantic models for persistence diagrams.

A pair records the filtration values of a feature together with the grid
vertices whose values realize them (topological inverse mapping).
"""

import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

GridIndex = tuple[int, int, int]
Point = tuple[float, float, float]


class PersistencePair(BaseModel):
    """A single persistent pair with its generating vertices."""

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    dim: int = Field(..., ge=0, le=2, description="Homological dimension")
    birth: float = Field(..., description="Filtration value at which the feature appears")
    death: float = Field(default=math.inf, description="Filtration value at which it vanishes")
    birth_vertex: GridIndex = Field(..., description="Grid index realizing the birth value")
    death_vertex: GridIndex | None = Field(
        None, description="Grid index realizing the death value (None for infinite pairs)"
    )
    birth_point: Point = Field(..., description="Spatial position of birth_vertex")
    death_point: Point | None = Field(None, description="Spatial position of death_vertex")

    @model_validator(mode="after")
    def validate_order(self) -> "PersistencePair":
        """Validate birth <= death and vertex presence for finite pairs."""
        if self.death < self.birth:
            raise ValueError("death precedes birth")
        if math.isfinite(self.death) != (self.death_vertex is not None):
            raise ValueError("finite pairs need a death vertex, infinite pairs must not have one")
        return self

    @property
    def is_infinite(self) -> bool:
        """Whether the feature never dies."""
        return math.isinf(self.death)

    @property
    def persistence(self) -> float:
        """Lifetime death - birth."""
        return self.death - self.birth


class PersistenceDiagram(BaseModel):
    """Multiset of dimension-tagged persistent pairs."""

    model_config = ConfigDict(frozen=True)

    pairs: list[PersistencePair] = Field(default_factory=list, description="All pairs")
    dimensions: tuple[int, ...] = Field(
        default=(0, 1, 2), description="Homological dimensions that were computed"
    )
    grid_dims: GridIndex | None = Field(None, description="Vertex counts of the source grid")

    def by_dim(self, dim: int) -> list[PersistencePair]:
        """Pairs of one dimension, in stored order."""
        return [p for p in self.pairs if p.dim == dim]

    def finite(self, dim: int) -> list[PersistencePair]:
        """Finite pairs of one dimension."""
        return [p for p in self.pairs if p.dim == dim and not p.is_infinite]
