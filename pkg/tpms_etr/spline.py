"""Trivariate B-spline fields: evaluation, LSPIA fitting and space-filling extension.

A TrivariateSpline is a tensor-product B-spline over [0,1]^3 with a dense
lattice of scalar coefficients C[i, j, k]. An ExtendedField turns a fitted
unit into a field over all of space: a half unit (period 2 per axis) is
unfolded by reflection or, for G, by its octant operators, and a complete
unit (period 1 per axis) is repeated.
"""

import logging
import math
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import ValidationError
from scipy.interpolate import BSpline

from tpms_etr.exceptions import ArtifactIOError, DomainError, NonFiniteSampleError
from tpms_etr.models.reports import ReferenceTpms, SplineDocument, Symmetry
from tpms_etr.models.tpms import Box, NodalField, SolidType, TpmsKind
from tpms_etr.nodal import RodField, reflect, translate

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

PARAMETER_TOLERANCE = 1e-12
# Points per vectorized evaluation chunk
EVAL_CHUNK = 65_536


# =============================================================================
# Knots and Bases
# =============================================================================

def uniform_clamped_knots(n: int, degree: int) -> FloatArray:
    """Uniform clamped knot vector on [0, 1] for n coefficients.

    Args:
        n: Number of coefficients.
        degree: Polynomial degree (< n).

    Returns:
        Knot vector of length n + degree + 1 with end multiplicity degree + 1.
    """
    if degree < 0 or n <= degree:
        raise DomainError(f"need more coefficients than the degree (n={n}, p={degree})")
    interior = np.linspace(0.0, 1.0, n - degree + 1)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def _check_parameters(params: ArrayLike) -> FloatArray:
    """Clamp parameters within tolerance of [0, 1], rejecting anything farther out."""
    arr = np.asarray(params, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("non-finite spline parameter")
    if np.any(arr < -PARAMETER_TOLERANCE) or np.any(arr > 1.0 + PARAMETER_TOLERANCE):
        bad = arr[(arr < -PARAMETER_TOLERANCE) | (arr > 1.0 + PARAMETER_TOLERANCE)].flat[0]
        raise DomainError(f"spline parameter {bad} outside [0, 1]")
    return np.clip(arr, 0.0, 1.0)


def axis_basis(knots: FloatArray, degree: int, params: ArrayLike) -> FloatArray:
    """Dense collocation matrix B[s, i] = B_{i,p}(params[s]) for one axis."""
    x = _check_parameters(params).ravel()
    return BSpline.design_matrix(x, knots, degree).toarray()


def axis_stencil(
    knots: FloatArray, degree: int, params: ArrayLike
) -> tuple[NDArray[np.intp], FloatArray]:
    """Local support of one axis: first basis index and the degree + 1 basis values.

    Returns:
        (first, values) with first of shape (N,) and values of shape (N, degree + 1).
    """
    x = _check_parameters(params).ravel()
    n = len(knots) - degree - 1
    dense = BSpline.design_matrix(x, knots, degree).toarray()
    span = np.searchsorted(knots, x, side="right") - 1
    first = np.clip(span, degree, n - 1) - degree
    cols = first[:, None] + np.arange(degree + 1)[None, :]
    return first, np.take_along_axis(dense, cols, axis=1)


def apply_grid(bu: FloatArray, bv: FloatArray, bw: FloatArray, coeffs: FloatArray) -> FloatArray:
    """Evaluate sum_abc Bu[i,a] Bv[j,b] Bw[k,c] C[a,b,c] on a tensor grid."""
    out = np.tensordot(bu, coeffs, axes=(1, 0))       # (i, b, c)
    out = np.tensordot(out, bv, axes=(1, 1))          # (i, c, j)
    out = np.tensordot(out, bw, axes=(1, 1))          # (i, j, k)
    return out


def project_grid(bu: FloatArray, bv: FloatArray, bw: FloatArray, values: FloatArray) -> FloatArray:
    """Adjoint of apply_grid: sum_ijk Bu[i,a] Bv[j,b] Bw[k,c] V[i,j,k]."""
    out = np.tensordot(bu, values, axes=(0, 0))       # (a, j, k)
    out = np.tensordot(out, bv, axes=(1, 0))          # (a, k, b)
    out = np.tensordot(out, bw, axes=(1, 0))          # (a, b, c)
    return out


# =============================================================================
# Trivariate Spline
# =============================================================================

class TrivariateSpline:
    """Tensor-product B-spline scalar function on [0,1]^3."""

    def __init__(
        self,
        degrees: tuple[int, int, int],
        knots: tuple[FloatArray, FloatArray, FloatArray] | list[FloatArray],
        coefficients: ArrayLike,
    ) -> None:
        self.degrees = tuple(int(p) for p in degrees)
        self.knots = tuple(np.asarray(t, dtype=np.float64) for t in knots)
        self.coefficients = np.array(coefficients, dtype=np.float64)

        if self.coefficients.ndim != 3:
            raise DomainError("coefficients must be a 3-D lattice")
        for axis, (p, t, n) in enumerate(zip(self.degrees, self.knots, self.coefficients.shape)):
            if len(t) != n + p + 1:
                raise DomainError(f"axis {axis}: expected {n + p + 1} knots, got {len(t)}")
            if np.any(np.diff(t) < 0):
                raise DomainError(f"axis {axis}: knots must be non-decreasing")
            if not (np.all(t[: p + 1] == t[0]) and np.all(t[-(p + 1):] == t[-1])):
                raise DomainError(f"axis {axis}: knot vector is not clamped")

    @classmethod
    def uniform(
        cls,
        dims: tuple[int, int, int],
        degrees: tuple[int, int, int] = (3, 3, 3),
        coefficients: ArrayLike | None = None,
    ) -> "TrivariateSpline":
        """Spline with uniform clamped knots (zero coefficients unless given)."""
        knots = [uniform_clamped_knots(n, p) for n, p in zip(dims, degrees)]
        coeffs = np.zeros(dims) if coefficients is None else coefficients
        return cls(degrees, knots, coeffs)

    def __repr__(self) -> str:
        return f"TrivariateSpline(degrees={self.degrees}, dims={self.dims})"

    @property
    def dims(self) -> tuple[int, int, int]:
        """Coefficient lattice dimensions (n_u, n_v, n_w)."""
        return self.coefficients.shape  # type: ignore[return-value]

    def with_coefficients(self, coefficients: ArrayLike) -> "TrivariateSpline":
        """Same knots and degrees, new coefficients."""
        return TrivariateSpline(self.degrees, self.knots, coefficients)

    def greville(self) -> list[FloatArray]:
        """Greville abscissae per axis."""
        return [
            np.array([t[i + 1: i + p + 1].mean() for i in range(len(t) - p - 1)])
            for t, p in zip(self.knots, self.degrees)
        ]

    def bases(self, us: ArrayLike, vs: ArrayLike, ws: ArrayLike) -> list[FloatArray]:
        """Dense per-axis collocation matrices for a tensor grid."""
        return [axis_basis(t, p, x) for t, p, x in zip(self.knots, self.degrees, (us, vs, ws))]

    def evaluate_grid(self, us: ArrayLike, vs: ArrayLike, ws: ArrayLike) -> FloatArray:
        """Evaluate on the tensor grid us x vs x ws."""
        return apply_grid(*self.bases(us, vs, ws), self.coefficients)

    def evaluate_points(self, uvw: ArrayLike) -> FloatArray:
        """Evaluate at an (N, 3) array of parameters."""
        pts = np.asarray(uvw, dtype=np.float64).reshape(-1, 3)
        out = np.empty(len(pts))
        pu, pv, pw = self.degrees
        au, av, aw = np.arange(pu + 1), np.arange(pv + 1), np.arange(pw + 1)
        for start in range(0, len(pts), EVAL_CHUNK):
            chunk = pts[start: start + EVAL_CHUNK]
            (fu, wu), (fv, wv), (fw, ww) = (
                axis_stencil(t, p, chunk[:, axis])
                for axis, (t, p) in enumerate(zip(self.knots, self.degrees))
            )
            local = self.coefficients[
                (fu[:, None] + au)[:, :, None, None],
                (fv[:, None] + av)[:, None, :, None],
                (fw[:, None] + aw)[:, None, None, :],
            ]
            out[start: start + len(chunk)] = np.einsum("na,nb,nc,nabc->n", wu, wv, ww, local)
        return out

    def to_document(
        self, symmetry: Symmetry | None = None, reference: ReferenceTpms | None = None
    ) -> SplineDocument:
        """Serializable form (coefficients flattened k-fastest)."""
        return SplineDocument(
            degrees=self.degrees,
            knots=[t.tolist() for t in self.knots],
            dims=self.dims,
            coefficients=self.coefficients.ravel(order="C").tolist(),
            symmetry=symmetry,
            reference=reference,
        )

    @classmethod
    def from_document(cls, document: SplineDocument) -> "TrivariateSpline":
        """Rebuild a spline from its serialized form."""
        coeffs = np.asarray(document.coefficients, dtype=np.float64)
        if coeffs.size != math.prod(document.dims):
            raise DomainError("coefficient count does not match dims")
        return cls(document.degrees, document.knots, coeffs.reshape(document.dims, order="C"))


def eval_spline(spline: TrivariateSpline, uvw: ArrayLike) -> float:
    """Evaluate a spline at one parameter triple.

    Raises:
        DomainError: If uvw lies outside [0,1]^3 beyond the clamping tolerance.
    """
    return float(spline.evaluate_points(np.asarray(uvw, dtype=np.float64).reshape(1, 3))[0])


def blending_weights(
    spline: TrivariateSpline, uvw: ArrayLike
) -> list[tuple[tuple[int, int, int], float]]:
    """Nonzero blending bases R_ijk at one parameter triple.

    Args:
        spline: The spline.
        uvw: Parameter triple in [0,1]^3.

    Returns:
        List of ((i, j, k), R_ijk) for every nonzero basis, weights summing to 1.
    """
    p = np.asarray(uvw, dtype=np.float64).reshape(3)
    stencils = [axis_stencil(t, d, p[axis: axis + 1])
                for axis, (t, d) in enumerate(zip(spline.knots, spline.degrees))]
    (fu, wu), (fv, wv), (fw, ww) = stencils
    weights = np.einsum("a,b,c->abc", wu[0], wv[0], ww[0])
    out = []
    for (a, b, c), w in np.ndenumerate(weights):
        if w != 0.0:
            out.append(((int(fu[0]) + a, int(fv[0]) + b, int(fw[0]) + c), float(w)))
    return out


def blending_gradient(spline: TrivariateSpline, uvw: ArrayLike) -> FloatArray:
    """Dense lattice of R_ijk(uvw), i.e. the derivative of C(uvw) w.r.t. every C_ijk."""
    grad = np.zeros(spline.dims)
    for index, weight in blending_weights(spline, uvw):
        grad[index] += weight
    return grad


# =============================================================================
# Extended Field
# =============================================================================

# Axis-separable operators x -> sign * x + shift (mod 2) under which the G field
# is invariant. Row 4 bx + 2 by + bz carries the octant with bits b (b = 1 on
# [1, 2)) onto the half unit [0, 1]^3.
ROTATION_SIGNS = np.array([
    [1, 1, 1], [-1, 1, -1], [1, -1, -1], [-1, -1, 1],
    [-1, -1, 1], [1, -1, -1], [-1, 1, -1], [1, 1, 1],
], dtype=np.float64)
ROTATION_SHIFTS = np.array([
    [0, 0, 0], [1, 0, 0], [0, 0, 1], [1, 0, 1],
    [0, 1, 0], [1, 1, 0], [0, 1, 1], [1, 1, 1],
], dtype=np.float64)
OCTANT_BITS = np.array([4, 2, 1])

# Extension that rebuilds each kind from its half unit; D has none.
HALF_UNIT_SYMMETRY = {
    TpmsKind.P: Symmetry.HALF_UNIT_REFLECTIVE,
    TpmsKind.IWP: Symmetry.HALF_UNIT_REFLECTIVE,
    TpmsKind.FRD: Symmetry.HALF_UNIT_REFLECTIVE,
    TpmsKind.G: Symmetry.HALF_UNIT_ROTATIONAL,
}


def half_unit_symmetry(kind: TpmsKind) -> Symmetry:
    """Half-unit extension reproducing a TPMS kind.

    Raises:
        DomainError: If the half unit does not determine the complete unit (D).
    """
    try:
        return HALF_UNIT_SYMMETRY[kind]
    except KeyError:
        raise DomainError(
            f"{kind.value} cannot be rebuilt from its half unit; fit the complete unit"
        ) from None


def rotational_fold(points: ArrayLike) -> FloatArray:
    """Fold points of shape (..., 3) onto [0, 1]^3 with the G octant operators."""
    t = np.asarray(translate(points, 1.0))
    octant = (t >= 1.0).astype(np.intp) @ OCTANT_BITS
    return np.asarray(translate(ROTATION_SIGNS[octant] * t + ROTATION_SHIFTS[octant], 1.0))


class ExtendedField:
    """A fitted unit extended to all of space.

    HALF_UNIT_REFLECTIVE: F(x) = C(eta^1 o iota^1 (x)), period 2, TPMS scale pi.
    HALF_UNIT_ROTATIONAL: F(x) = C(fold(x)) with the G octant operators, period 2.
    COMPLETE_UNIT_PERIODIC: F(x) = C(iota^(1/2)(x)), period 1, TPMS scale 2 pi.
    """

    def __init__(
        self,
        spline: TrivariateSpline,
        symmetry: Symmetry = Symmetry.HALF_UNIT_REFLECTIVE,
        reference: ReferenceTpms | None = None,
    ) -> None:
        self.spline = spline
        self.symmetry = symmetry
        self.reference = reference

    def __repr__(self) -> str:
        return f"ExtendedField({self.symmetry.value}, dims={self.spline.dims})"

    @property
    def period(self) -> float:
        """Period of the field per axis."""
        return 2.0 if self.symmetry.is_half_unit else 1.0

    @property
    def tpms_scale(self) -> float:
        """TPMS coordinate corresponding to spline parameter 1."""
        return math.pi if self.symmetry.is_half_unit else 2.0 * math.pi

    def with_spline(self, spline: TrivariateSpline) -> "ExtendedField":
        """Same extension applied to another spline."""
        return ExtendedField(spline, self.symmetry, self.reference)

    def to_parameter(self, x: ArrayLike) -> FloatArray:
        """Map field points of shape (..., 3) to spline parameters.

        The reflective and periodic maps act per axis and also accept single
        coordinate arrays.
        """
        match self.symmetry:
            case Symmetry.HALF_UNIT_REFLECTIVE:
                return np.asarray(reflect(translate(x, 1.0), 1.0))
            case Symmetry.HALF_UNIT_ROTATIONAL:
                return rotational_fold(x)
        return np.asarray(translate(x, 0.5))

    def analysis_box(self, units: int = 2) -> Box:
        """Box of `units` complete units per axis from the origin."""
        return Box.cube(units * self.period)

    def __call__(self, points: ArrayLike) -> FloatArray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise DomainError("non-finite evaluation point")
        return self.spline.evaluate_points(self.to_parameter(pts))

    def evaluate_grid(self, xs: FloatArray, ys: FloatArray, zs: FloatArray) -> FloatArray:
        if self.symmetry is not Symmetry.HALF_UNIT_ROTATIONAL:
            return self.spline.evaluate_grid(*(self.to_parameter(a) for a in (xs, ys, zs)))

        # Within one octant the fold is separable, so each octant is a tensor block.
        wrapped = [np.asarray(translate(np.asarray(a, dtype=np.float64), 1.0)).reshape(-1)
                   for a in (xs, ys, zs)]
        out = np.empty(tuple(len(t) for t in wrapped))
        for octant, (signs, shifts) in enumerate(zip(ROTATION_SIGNS, ROTATION_SHIFTS)):
            bits = [(octant >> shift) & 1 for shift in (2, 1, 0)]
            picks = [np.flatnonzero((t >= 1.0) == bool(b)) for t, b in zip(wrapped, bits)]
            if any(len(p) == 0 for p in picks):
                continue
            params = [np.asarray(translate(s * t[p] + a, 1.0)).reshape(-1)
                      for t, p, s, a in zip(wrapped, picks, signs, shifts)]
            out[np.ix_(*picks)] = self.spline.evaluate_grid(*params)
        return out


def eval_extended(field: ExtendedField, xyz: ArrayLike) -> float:
    """Evaluate an extended field at one point."""
    return float(field(np.asarray(xyz, dtype=np.float64).reshape(1, 3))[0])


def symmetry_operators(symmetry: Symmetry) -> list[tuple[FloatArray, FloatArray]]:
    """(signs, shifts) of the operators x -> signs * x + shifts checked for a symmetry.

    Rotational fields are checked against the G octant operators; the others
    against the three axis mirrors.
    """
    if symmetry is Symmetry.HALF_UNIT_ROTATIONAL:
        return list(zip(ROTATION_SIGNS[1:], ROTATION_SHIFTS[1:]))
    operators = []
    for axis in range(3):
        signs = np.ones(3)
        signs[axis] = -1.0
        operators.append((signs, np.zeros(3)))
    return operators


def symmetry_defect(field: ExtendedField, n_points: int = 10_000, seed: int = 0) -> float:
    """Largest |F(p) - F(g(p))| over random points p and the operators g of the field.

    Points are odd dyadic rationals in (0, period), so operator images are
    exact and never land on an octant face.
    """
    rng = np.random.default_rng(seed)
    period = field.period
    points = (2 * rng.integers(0, 2**19, size=(n_points, 3)) + 1) / 2**20 * period
    base = field(points)
    defect = 0.0
    for signs, shifts in symmetry_operators(field.symmetry):
        defect = max(defect, float(np.max(np.abs(field(points * signs + shifts) - base))))
    return defect


# =============================================================================
# Sampling and Fitting
# =============================================================================

@dataclass
class SampledGrid:
    """Values sampled on the closed uniform lattice of a box."""

    values: FloatArray
    box: Box

    def __post_init__(self) -> None:
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise DomainError("sampled grid needs at least 2 samples per axis")
        if not np.all(np.isfinite(self.values)):
            index = tuple(int(i) for i in np.argwhere(~np.isfinite(self.values))[0])
            raise NonFiniteSampleError(index)

    @property
    def resolution(self) -> tuple[int, int, int]:
        """Samples per axis."""
        return self.values.shape  # type: ignore[return-value]

    def parameters(self) -> list[FloatArray]:
        """Per-axis parameters of the samples, mapped linearly onto [0, 1]."""
        return [np.linspace(0.0, 1.0, n) for n in self.resolution]


@dataclass
class FitResult:
    """Outcome of an LSPIA fit."""

    spline: TrivariateSpline
    mse: float
    iterations: int
    converged: bool
    mse_history: list[float] = dataclass_field(default_factory=list)
    field: ExtendedField | None = None


def sample_nodal(field: NodalField, solid: SolidType, box: Box, resolution: int) -> SampledGrid:
    """Sample the rod form of a nodal field on the closed S^3 lattice of a box.

    Args:
        field: Nodal field.
        solid: Solid type selecting the rod-form transform.
        box: Sampling box (both faces included).
        resolution: Samples per axis (>= 2).

    Returns:
        The sampled grid.
    """
    if resolution < 2:
        raise DomainError("resolution must be at least 2")
    axes = box.axes((resolution,) * 3)
    return SampledGrid(values=RodField(field, solid).evaluate_grid(*axes), box=box)


def _lspia_step(bases: list[FloatArray]) -> float:
    """LSPIA step 1 / lambda_max of the normal matrix.

    The normal matrix of a tensor-product collocation is a Kronecker product,
    so its largest eigenvalue is the product of the per-axis ones. Smooth
    residual modes are removed in a single step and no mode grows.
    """
    top = 1.0
    for b in bases:
        top *= float(np.linalg.eigvalsh(b.T @ b)[-1])
    return 1.0 / top


def fit_lspia(
    data: SampledGrid,
    degrees: tuple[int, int, int] = (3, 3, 3),
    lattice_dims: tuple[int, int, int] = (10, 10, 10),
    max_iters: int = 500,
    tol: float = 1e-6,
) -> FitResult:
    """Fit a trivariate B-spline to gridded samples by LSPIA.

    Each iteration redistributes the residual onto the coefficients,
    C <- C + mu * A^T (xi - A C), until one iteration lowers the MSE by no
    more than `tol` times its previous value, or `max_iters` is reached.

    Args:
        data: Samples; sample (i, j, k) has parameter (i, j, k) / (S - 1).
        degrees: Degree per axis.
        lattice_dims: Coefficients per axis.
        max_iters: Iteration cap.
        tol: Relative MSE improvement tolerance.

    Returns:
        FitResult with the best iterate and its MSE.

    Raises:
        DomainError: If the lattice exceeds the samples or degrees are too high.
    """
    for n, s, p in zip(lattice_dims, data.resolution, degrees):
        if n > s:
            raise DomainError(f"lattice dims {lattice_dims} exceed samples {data.resolution}")
        if p >= n:
            raise DomainError(f"degree {p} needs more than {n} coefficients")

    spline = TrivariateSpline.uniform(lattice_dims, degrees)
    params = data.parameters()
    bases = spline.bases(*params)

    # Seed every coefficient with the sample nearest to its Greville abscissa
    nearest = [np.rint(g * (s - 1)).astype(int) for g, s in zip(spline.greville(), data.resolution)]
    coeffs = data.values[np.ix_(*nearest)].copy()

    mu = _lspia_step(bases)
    residual = data.values - apply_grid(*bases, coeffs)
    mse = float(np.mean(residual**2))
    history = [mse]
    best_coeffs, best_mse = coeffs.copy(), mse
    converged = False
    iterations = 0

    for iterations in range(1, max_iters + 1):
        previous = mse
        coeffs = coeffs + mu * project_grid(*bases, residual)
        residual = data.values - apply_grid(*bases, coeffs)
        mse = float(np.mean(residual**2))
        history.append(mse)
        if mse <= best_mse:
            best_coeffs, best_mse = coeffs.copy(), mse
        if abs(previous - mse) <= tol * previous:
            converged = True
            break

    if converged:
        logger.info(f"LSPIA converged after {iterations} iterations, MSE={best_mse:.3e}")
    else:
        logger.warning(f"LSPIA stopped at {iterations} iterations without meeting tol={tol:g}, "
                       f"MSE={best_mse:.3e}")

    return FitResult(
        spline=spline.with_coefficients(best_coeffs),
        mse=best_mse,
        iterations=iterations,
        converged=converged,
        mse_history=history,
    )


def fit_partial(
    field: NodalField,
    solid: SolidType = SolidType.ROD,
    lattice_dims: tuple[int, int, int] = (10, 10, 10),
    samples: int = 60,
    degrees: tuple[int, int, int] = (3, 3, 3),
    max_iters: int = 500,
    tol: float = 1e-6,
) -> FitResult:
    """Fit the half unit [0, pi]^3 and extend it by the symmetry of the kind.

    P, IWP and FRD unfold by reflection, G by its octant operators.

    Returns:
        FitResult whose `field` is a half-unit ExtendedField.

    Raises:
        DomainError: For D, which only supports fit_complete.
    """
    symmetry = half_unit_symmetry(field.kind)
    box = RodField(field, solid).half_unit_box()
    result = fit_lspia(sample_nodal(field, solid, box, samples), degrees, lattice_dims,
                       max_iters, tol)
    result.field = ExtendedField(
        result.spline, symmetry,
        ReferenceTpms(kind=field.kind, solid=solid, frequencies=field.frequencies),
    )
    return result


def fit_complete(
    field: NodalField,
    solid: SolidType = SolidType.ROD,
    lattice_dims: tuple[int, int, int] = (10, 10, 10),
    samples: int = 60,
    degrees: tuple[int, int, int] = (3, 3, 3),
    max_iters: int = 500,
    tol: float = 1e-6,
) -> FitResult:
    """Fit the complete unit [0, 2 pi]^3 and extend it periodically.

    Returns:
        FitResult whose `field` is a COMPLETE_UNIT_PERIODIC ExtendedField.
    """
    box = field.unit_box(1)
    result = fit_lspia(sample_nodal(field, solid, box, samples), degrees, lattice_dims,
                       max_iters, tol)
    result.field = ExtendedField(
        result.spline, Symmetry.COMPLETE_UNIT_PERIODIC,
        ReferenceTpms(kind=field.kind, solid=solid, frequencies=field.frequencies),
    )
    return result


# =============================================================================
# Spline JSON
# =============================================================================

def write_spline(path: str | Path, field: ExtendedField) -> None:
    """Write an extended field's spline, symmetry and reference as JSON."""
    document = field.spline.to_document(field.symmetry, field.reference)
    try:
        Path(path).write_text(document.model_dump_json(indent=2), encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(path, str(e)) from e


def read_spline(path: str | Path) -> ExtendedField:
    """Read a spline JSON document (symmetry defaults to half-unit reflective)."""
    try:
        document = SplineDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(path, str(e)) from e
    except ValidationError as e:
        raise ArtifactIOError(path, f"invalid spline document: {e.error_count()} errors") from e
    return ExtendedField(
        TrivariateSpline.from_document(document),
        document.symmetry or Symmetry.HALF_UNIT_REFLECTIVE,
        document.reference,
    )
