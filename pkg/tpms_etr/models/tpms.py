"""Pydantic models for nodal TPMS fields and sampling boxes.

TPMS kinds:
- P: Schwarz primitive
- D: Schwarz diamond
- G: Schoen gyroid
- IWP: Schoen I-WP
- FRD: Schoen F-RD (nodal form taken from the wider literature)

Solid types:
- rod: {phi <= c}
- pore: {phi >= c}
- sheet: {-c <= phi <= c}
"""

import math
from enum import Enum
from typing import Protocol, runtime_checkable

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# =============================================================================
# Enums
# =============================================================================

class TpmsKind(str, Enum):
    """Available nodal TPMS approximations."""

    P = "P"
    D = "D"
    G = "G"
    IWP = "IWP"
    FRD = "FRD"


class SolidType(str, Enum):
    """How a threshold on the nodal field selects solid material."""

    ROD = "rod"
    PORE = "pore"
    SHEET = "sheet"


# =============================================================================
# Field Models
# =============================================================================

class NodalField(BaseModel):
    """Analytic periodic nodal TPMS field."""

    model_config = ConfigDict(frozen=True)

    kind: TpmsKind = Field(..., description="TPMS family")
    frequencies: tuple[float, float, float] = Field(
        default=(1.0, 1.0, 1.0),
        description="Angular frequencies (omega_x, omega_y, omega_z) in radians per unit length",
    )

    @field_validator("frequencies")
    @classmethod
    def validate_frequencies(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        """Validate that every angular frequency is positive and finite."""
        if not all(math.isfinite(w) and w > 0 for w in v):
            raise ValueError("angular frequencies must be positive and finite")
        return v

    @property
    def period(self) -> tuple[float, float, float]:
        """Spatial period per axis (2*pi / omega)."""
        return tuple(2.0 * math.pi / w for w in self.frequencies)  # type: ignore[return-value]

    def unit_box(self, units: int = 1) -> "Box":
        """Box spanning `units` complete units per axis from the origin."""
        return Box(lower=(0.0, 0.0, 0.0), upper=tuple(units * p for p in self.period))


class Box(BaseModel):
    """Axis-aligned box in field coordinates."""

    model_config = ConfigDict(frozen=True)

    lower: tuple[float, float, float] = Field(..., description="Minimum corner")
    upper: tuple[float, float, float] = Field(..., description="Maximum corner")

    @model_validator(mode="after")
    def validate_extent(self) -> "Box":
        """Validate that the box is non-degenerate on every axis."""
        if not all(math.isfinite(a) and math.isfinite(b) and b > a
                   for a, b in zip(self.lower, self.upper)):
            raise ValueError("box must have finite, strictly increasing bounds")
        return self

    @classmethod
    def cube(cls, upper: float, lower: float = 0.0) -> "Box":
        """Cube [lower, upper]^3."""
        return cls(lower=(lower,) * 3, upper=(upper,) * 3)

    @property
    def volume(self) -> float:
        """Box volume."""
        return math.prod(b - a for a, b in zip(self.lower, self.upper))

    def axes(self, dims: tuple[int, int, int]) -> list[NDArray[np.float64]]:
        """Closed uniform lattice coordinates per axis, both faces included."""
        return [np.linspace(a, b, n) for a, b, n in zip(self.lower, self.upper, dims)]


# =============================================================================
# Field Protocol
# =============================================================================

@runtime_checkable
class ScalarField(Protocol):
    """A scalar field that can be sampled at points and on separable grids."""

    def __call__(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate at an (N, 3) array of points."""
        ...

    def evaluate_grid(
        self, xs: NDArray[np.float64], ys: NDArray[np.float64], zs: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """Evaluate on the tensor grid xs x ys x zs, returning an array indexed [i, j, k]."""
        ...
