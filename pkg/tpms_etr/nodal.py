"""Analytic nodal TPMS fields, solid-type reduction and unit symmetry operators.

Nodal approximations (omega-scaled coordinates, cx = cos(omega_x x), ...):

    P    [cx + cy + cz] / 0.9
    D    [cx cy cz - sx sy sz] / 0.6
    G    [sx cy + sy cz + sz cx] / 0.9
    IWP  {2 [cx cy + cy cz + cz cx] - [c2x + c2y + c2z]} / 2.5
    FRD  4 cx cy cz - [c2x c2y + c2y c2z + c2z c2x]

The FRD form is the common literature approximation; it is not part of the
table the other four come from.
"""

from typing import overload

import numpy as np
from numpy.typing import ArrayLike, NDArray

from tpms_etr.exceptions import DomainError
from tpms_etr.models.tpms import Box, NodalField, SolidType, TpmsKind

FloatArray = NDArray[np.float64]


def nodal_values(field: NodalField, x: ArrayLike, y: ArrayLike, z: ArrayLike) -> FloatArray:
    """Evaluate a nodal field on broadcastable coordinate arrays.

    Args:
        field: The nodal field.
        x: x coordinates.
        y: y coordinates.
        z: z coordinates.

    Returns:
        Field values with the broadcast shape of the inputs.
    """
    wx, wy, wz = field.frequencies
    ax = wx * np.asarray(x, dtype=np.float64)
    ay = wy * np.asarray(y, dtype=np.float64)
    az = wz * np.asarray(z, dtype=np.float64)
    cx, cy, cz = np.cos(ax), np.cos(ay), np.cos(az)

    match field.kind:
        case TpmsKind.P:
            return (cx + cy + cz) / 0.9
        case TpmsKind.D:
            sx, sy, sz = np.sin(ax), np.sin(ay), np.sin(az)
            return (cx * cy * cz - sx * sy * sz) / 0.6
        case TpmsKind.G:
            sx, sy, sz = np.sin(ax), np.sin(ay), np.sin(az)
            return (sx * cy + sy * cz + sz * cx) / 0.9
        case TpmsKind.IWP:
            c2x, c2y, c2z = np.cos(2 * ax), np.cos(2 * ay), np.cos(2 * az)
            return (2.0 * (cx * cy + cy * cz + cz * cx) - (c2x + c2y + c2z)) / 2.5
        case TpmsKind.FRD:
            c2x, c2y, c2z = np.cos(2 * ax), np.cos(2 * ay), np.cos(2 * az)
            return 4.0 * cx * cy * cz - (c2x * c2y + c2y * c2z + c2z * c2x)
    raise DomainError(f"unsupported TPMS kind {field.kind!r}")


def eval_nodal(field: NodalField, point: ArrayLike) -> float:
    """Evaluate a nodal field at a single point.

    Args:
        field: The nodal field.
        point: A 3-vector.

    Returns:
        The closed-form field value.

    Raises:
        DomainError: If a coordinate is not finite.
    """
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise DomainError(f"non-finite point {tuple(p)}")
    return float(nodal_values(field, p[0], p[1], p[2]))


@overload
def to_rod_form(value: float, solid: SolidType) -> float: ...
@overload
def to_rod_form(value: FloatArray, solid: SolidType) -> FloatArray: ...


def to_rod_form(value, solid):
    """Rewrite a field so that the solid is its sublevel set.

    Rod is unchanged, Pore is negated (phi >= c iff -phi <= -c) and Sheet
    takes the absolute value (-c <= phi <= c iff |phi| <= c).
    """
    match solid:
        case SolidType.ROD:
            return value
        case SolidType.PORE:
            return -value
        case SolidType.SHEET:
            return abs(value) if isinstance(value, float | int) else np.abs(value)
    raise DomainError(f"unsupported solid type {solid!r}")


def rod_threshold(c: float, solid: SolidType) -> float:
    """Threshold of the rod-form field selecting the same solid as `c`."""
    return -c if solid is SolidType.PORE else c


def reflect(x: ArrayLike, half_period: float) -> float | FloatArray:
    """Reflection eta^X folding [0, 2X] onto [0, X].

    Args:
        x: Coordinate(s) in [0, 2X].
        half_period: X.

    Returns:
        x where x <= X, else 2X - x.

    Raises:
        DomainError: If any x lies outside [0, 2X].
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 2.0 * half_period) or not np.all(np.isfinite(arr)):
        raise DomainError(f"reflect expects values in [0, {2.0 * half_period}]")
    out = np.where(arr <= half_period, arr, 2.0 * half_period - arr)
    return float(out) if out.ndim == 0 else out


def translate(x: ArrayLike, half_period: float) -> float | FloatArray:
    """Translation iota^X wrapping the real line onto [0, 2X).

    Args:
        x: Finite coordinate(s).
        half_period: X > 0.

    Returns:
        x - 2X floor(x / 2X), in [0, 2X).

    Raises:
        DomainError: If X is not positive.
    """
    if not half_period > 0:
        raise DomainError("half period must be positive")
    period = 2.0 * half_period
    arr = np.asarray(x, dtype=np.float64)
    out = arr - period * np.floor(arr / period)
    # Rounding can land exactly on the open end for tiny negative inputs.
    out = np.where(out >= period, 0.0, out)
    return float(out) if out.ndim == 0 else out


class RodField:
    """Nodal field in rod form: the solid is the sublevel set.

    Implements the ScalarField protocol so it can feed persistence, meshing
    and density computations.
    """

    def __init__(self, field: NodalField, solid: SolidType = SolidType.ROD) -> None:
        self.field = field
        self.solid = solid

    def __repr__(self) -> str:
        return f"RodField({self.field.kind.value}, {self.solid.value})"

    def __call__(self, points: ArrayLike) -> FloatArray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return to_rod_form(nodal_values(self.field, pts[:, 0], pts[:, 1], pts[:, 2]), self.solid)

    def evaluate_grid(self, xs: FloatArray, ys: FloatArray, zs: FloatArray) -> FloatArray:
        values = nodal_values(self.field, xs[:, None, None], ys[None, :, None], zs[None, None, :])
        return to_rod_form(values, self.solid)

    def analysis_box(self, units: int = 2) -> Box:
        """Box of `units` complete units per axis (2x2x2 by default)."""
        return self.field.unit_box(units)

    def half_unit_box(self) -> Box:
        """The half unit [0, pi/omega]^3."""
        return Box(lower=(0.0, 0.0, 0.0), upper=tuple(p / 2.0 for p in self.field.period))
