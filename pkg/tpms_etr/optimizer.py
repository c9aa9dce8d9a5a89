"""Extension of the effective threshold range by coefficient optimization.

The loss mixes a topological term, pulling the last component merge and the
first cavity towards widened targets, with a similarity term that keeps the
spline close to the reference TPMS on the originally effective region:

    L = (1 - alpha) * L_top + alpha * L_sim
    L_top = (d1 - c_min)^2 + (b0 - c_max)^2
    L_sim = integral over [0,1]^3 of (C(u) - phi(s u))^2 * g_A(u)

where g_A is a spline fit of the indicator of {c_min0 <= phi <= c_max0}
and s the TPMS scale of the field's parameter domain. The topological
gradient flows through the grid vertices that realize d1 and b0.
"""

import csv
import logging
import math
from dataclasses import dataclass
from multiprocessing.pool import ThreadPool
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from tpms_etr.etr import EtrExtraction, analyze_field, extract_etr
from tpms_etr.exceptions import ArtifactIOError, DomainError, SimilaritySampleError
from tpms_etr.models.reports import (
    IterationRecord,
    LossMode,
    OptimizationTrace,
    OptimizerConfig,
    Symmetry,
    TraceStatus,
)
from tpms_etr.models.tpms import Box, NodalField, SolidType
from tpms_etr.nodal import RodField
from tpms_etr.persistence import build_filtration, compute_persistence
from tpms_etr.spline import (
    ExtendedField,
    SampledGrid,
    TrivariateSpline,
    apply_grid,
    blending_gradient,
    fit_lspia,
    project_grid,
)

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

ADAGRAD_EPS = 1e-8
TRACE_HEADER = ["iter", "L", "L_top", "L_sim", "d1_0", "b0_2"]


def expansion_targets(etr0: tuple[float, float], expansion_ratio: float) -> tuple[float, float]:
    """Widened range (c_min0 - mu l0, c_max0 + mu l0) with l0 = c_max0 - c_min0."""
    c_min0, c_max0 = etr0
    length = c_max0 - c_min0
    return c_min0 - expansion_ratio * length, c_max0 + expansion_ratio * length


def reference_points(field: ExtendedField, reference: NodalField, uvw: FloatArray) -> FloatArray:
    """Map spline parameters to reference TPMS coordinates (s u / omega per axis)."""
    scale = np.array([field.tpms_scale / w for w in reference.frequencies])
    return np.asarray(uvw) * scale


# =============================================================================
# Indicator Fit
# =============================================================================

def fit_indicator(
    reference: NodalField,
    solid: SolidType,
    etr0: tuple[float, float],
    resolution: int = 60,
    lattice_dims: tuple[int, int, int] = (10, 10, 10),
    degrees: tuple[int, int, int] = (3, 3, 3),
    symmetry: Symmetry = Symmetry.HALF_UNIT_REFLECTIVE,
) -> TrivariateSpline:
    """Spline fit g_A of the indicator of {c_min0 <= phi <= c_max0} over [0,1]^3.

    Args:
        reference: Reference nodal field.
        solid: Solid type (the indicator uses the rod form).
        etr0: Original effective threshold range.
        resolution: Indicator samples I per axis.
        lattice_dims: Coefficients per axis.
        degrees: Degrees per axis.
        symmetry: Parameter domain convention (half unit or complete unit).

    Returns:
        The fitted spline; values are not clamped to [0, 1].
    """
    scale = math.pi if symmetry.is_half_unit else 2.0 * math.pi
    axes = [np.linspace(0.0, scale / w, resolution) for w in reference.frequencies]
    values = RodField(reference, solid).evaluate_grid(*axes)
    c_min0, c_max0 = etr0
    indicator = ((values >= c_min0) & (values <= c_max0)).astype(np.float64)
    logger.debug(f"Indicator covers {indicator.mean():.3f} of the parameter domain")
    data = SampledGrid(values=indicator, box=Box.cube(1.0))
    return fit_lspia(data, degrees, lattice_dims).spline


# =============================================================================
# Losses
# =============================================================================

def loss_top(d1: float, b0: float, targets: tuple[float, float]) -> float:
    """Squared distance of the range endpoints (d1, b0) from their targets."""
    c_min, c_max = targets
    return (d1 - c_min) ** 2 + (b0 - c_max) ** 2


@dataclass
class TopologyState:
    """Endpoints of the current field and the points whose values realize them."""

    extraction: EtrExtraction
    d1: float | None
    b0: float
    tau: tuple[float, float, float] | None
    sigma: tuple[float, float, float]
    note: str | None = None


@dataclass
class LossEvaluation:
    """Loss terms and gradient at one coefficient lattice."""

    loss: float
    loss_top: float
    loss_sim: float
    gradient: FloatArray
    state: TopologyState


class LossProblem:
    """Loss and gradient of one extension run.

    Quadrature bases, reference values and g_A are sampled once; every
    evaluation recomputes persistence of the current field.
    """

    def __init__(
        self,
        field: ExtendedField,
        reference: NodalField,
        solid: SolidType,
        etr0: tuple[float, float],
        config: OptimizerConfig,
        indicator: TrivariateSpline | None = None,
        threads: int | None = None,
    ) -> None:
        self.field = field
        self.threads = threads
        self.config = config
        self.etr0 = etr0
        self.targets = expansion_targets(etr0, config.expansion_ratio)
        self.box = field.analysis_box(2)

        if indicator is None:
            indicator = fit_indicator(reference, solid, etr0, config.indicator_resolution,
                                      field.spline.dims, field.spline.degrees, field.symmetry)
        self.indicator = indicator

        # Midpoint rule on the parameter cube
        q = (np.arange(config.quadrature_resolution) + 0.5) / config.quadrature_resolution
        self.bases = field.spline.bases(q, q, q)
        self.cell_volume = 1.0 / config.quadrature_resolution**3
        axes = [reference_points(field, reference, np.stack([q] * 3, axis=1))[:, d]
                for d in range(3)]
        self.reference_values = RodField(reference, solid).evaluate_grid(*axes)
        self.indicator_values = indicator.evaluate_grid(q, q, q)

    def similarity(self, coefficients: FloatArray) -> tuple[float, FloatArray]:
        """Quadrature of L_sim and its coefficient gradient."""
        diff = apply_grid(*self.bases, coefficients) - self.reference_values
        weighted = diff * self.indicator_values
        loss = float(np.sum(diff * weighted) * self.cell_volume)
        gradient = 2.0 * self.cell_volume * project_grid(*self.bases, weighted)
        return loss, gradient

    def topology(self, field: ExtendedField) -> TopologyState:
        """Persistence of the field on its 2x2x2-unit box and the determining points."""
        n = self.config.persistence_grid
        grid = build_filtration(field, self.box, (n, n, n))
        diagram = compute_persistence(grid, dimensions=(0, 2))
        extraction = extract_etr(
            diagram, self.config.epsilon, self.config.sigma,
            value_range=(float(grid.values.min()), float(grid.values.max())),
        )
        notes = []
        component, cavity = extraction.determining.component, extraction.determining.cavity

        if component is not None:
            d1, tau = component.death, component.death_point
        else:
            d1, tau = None, None
            notes.append("no component merge")
        if cavity is not None:
            b0, sigma = cavity.birth, cavity.birth_point
        else:
            top = int(np.argmax(grid.flat_values))
            b0, sigma = float(grid.flat_values[top]), grid.point(grid.index(top))
            notes.append("no cavity, using field maximum")

        return TopologyState(extraction, d1, b0, tau, sigma, "; ".join(notes) or None)

    def evaluate(self, coefficients: FloatArray) -> LossEvaluation:
        """Full loss and gradient at a coefficient lattice."""
        spline = self.field.spline.with_coefficients(coefficients)
        if self.threads and self.threads > 1:
            with ThreadPool(2) as pool:
                pending = pool.apply_async(self.similarity, (coefficients,))
                state = self.topology(self.field.with_spline(spline))
                sim, sim_grad = pending.get()
        else:
            state = self.topology(self.field.with_spline(spline))
            sim, sim_grad = self.similarity(coefficients)
        c_min, c_max = self.targets

        def weights_at(point: tuple[float, float, float]) -> FloatArray:
            return blending_gradient(spline, self.field.to_parameter(np.asarray(point)))

        top_grad = np.zeros_like(coefficients)
        if self.config.loss_mode is LossMode.BOUNDED:
            top = (state.b0 - c_max) ** 2
            top_grad += 2.0 * (state.b0 - c_max) * weights_at(state.sigma)
            if state.d1 is not None:
                top += (state.d1 - c_min) ** 2
                top_grad += 2.0 * (state.d1 - c_min) * weights_at(state.tau)
        else:
            top = -state.b0
            top_grad -= weights_at(state.sigma)
            if state.d1 is not None:
                top += state.d1
                top_grad += weights_at(state.tau)

        alpha = self.config.weight
        return LossEvaluation(
            loss=(1.0 - alpha) * top + alpha * sim,
            loss_top=top,
            loss_sim=sim,
            gradient=(1.0 - alpha) * top_grad + alpha * sim_grad,
            state=state,
        )


def loss_sim(
    spline: TrivariateSpline,
    reference: NodalField,
    solid: SolidType,
    indicator: TrivariateSpline,
    quadrature_resolution: int = 48,
    symmetry: Symmetry = Symmetry.HALF_UNIT_REFLECTIVE,
) -> float:
    """Midpoint-rule quadrature of (C(u) - phi(s u))^2 * g_A(u) over [0,1]^3."""
    q = (np.arange(quadrature_resolution) + 0.5) / quadrature_resolution
    field = ExtendedField(spline, symmetry)
    axes = [reference_points(field, reference, np.stack([q] * 3, axis=1))[:, d] for d in range(3)]
    diff = spline.evaluate_grid(q, q, q) - RodField(reference, solid).evaluate_grid(*axes)
    return float(np.sum(diff**2 * indicator.evaluate_grid(q, q, q)) / quadrature_resolution**3)


def grad_loss(problem: LossProblem, spline: TrivariateSpline) -> FloatArray:
    """Coefficient gradient of the combined loss (1 - alpha) L_top + alpha L_sim."""
    return problem.evaluate(spline.coefficients).gradient


# =============================================================================
# Optimization
# =============================================================================

class Adagrad:
    """Per-coefficient adaptive gradient steps.

    The accumulator starts at the largest squared entry of the first gradient:
    the steepest coefficient moves by lr / sqrt(2) on the first step and
    coefficients with negligible gradients barely move.
    """

    def __init__(self, learning_rate: float) -> None:
        self.learning_rate = learning_rate
        self.accumulated: FloatArray | None = None

    def step(self, coefficients: FloatArray, gradient: FloatArray) -> FloatArray:
        """Coefficients after one update with `gradient`."""
        squared = gradient**2
        if self.accumulated is None:
            self.accumulated = np.full_like(gradient, float(np.max(squared, initial=0.0)))
        self.accumulated += squared
        return coefficients - (
            self.learning_rate * gradient / (np.sqrt(self.accumulated) + ADAGRAD_EPS)
        )


def reference_etr(
    reference: NodalField, solid: SolidType, config: OptimizerConfig
) -> tuple[float, float]:
    """ETR of the nodal field on its 2x2x2-unit box at the configured grid."""
    rod = RodField(reference, solid)
    n = config.persistence_grid
    grid = build_filtration(rod, rod.analysis_box(), (n, n, n))
    diagram = compute_persistence(grid, dimensions=(0, 2))
    extraction = extract_etr(
        diagram, config.epsilon, config.sigma,
        value_range=(float(grid.values.min()), float(grid.values.max())),
    )
    return extraction.etr


def optimize(
    initial: ExtendedField,
    reference: NodalField,
    solid: SolidType = SolidType.ROD,
    config: OptimizerConfig | None = None,
    etr0: tuple[float, float] | None = None,
    indicator: TrivariateSpline | None = None,
    final_analysis: bool = True,
    threads: int | None = None,
) -> tuple[ExtendedField, OptimizationTrace]:
    """Widen the effective threshold range of a fitted field by adaptive gradient descent.

    Each iteration recomputes persistence of the current field, forms the
    loss and gradient, and applies an Adagrad step. The run stops when |dL|
    stays below the tolerance for the configured window, at max_iters, or
    when the loss exceeds the divergence factor times its initial value.

    Args:
        initial: Fitted field (half-unit reflective, or complete-unit periodic
            for the symmetry comparison).
        reference: Reference nodal field.
        solid: Solid type of the reference.
        config: Optimizer settings.
        etr0: Original ETR; computed from the nodal field when omitted.
        indicator: Pre-fitted g_A; fitted when omitted.
        final_analysis: Whether to compute the final EtrReport (with meshing).
        threads: Worker threads for the loss terms and the final density sweep.

    Returns:
        (optimized field, trace).
    """
    config = config or OptimizerConfig()
    if etr0 is None:
        etr0 = reference_etr(reference, solid, config)
    if not etr0[1] > etr0[0]:
        raise DomainError(f"original ETR {etr0} is empty")

    problem = LossProblem(initial, reference, solid, etr0, config, indicator, threads)
    trace = OptimizationTrace(targets=problem.targets, initial_etr=etr0)
    logger.info(f"Optimizing {initial!r}: ETR {etr0[0]:.4f}..{etr0[1]:.4f} -> targets "
                f"{problem.targets[0]:.4f}..{problem.targets[1]:.4f} ({config.loss_mode.value})")

    coefficients = initial.spline.coefficients.copy()
    adagrad = Adagrad(config.learning_rate)
    initial_loss: float | None = None
    previous: float | None = None
    quiet = 0

    for iteration in range(config.max_iters):
        step = problem.evaluate(coefficients)
        state = step.state
        trace.records.append(IterationRecord(
            iteration=iteration, loss=step.loss, loss_top=step.loss_top,
            loss_sim=step.loss_sim, d1_0=state.d1, b0_2=state.b0, note=state.note,
        ))
        if state.note and iteration == 0:
            logger.warning(f"Iteration 0: {state.note}")
        if iteration % 10 == 0:
            logger.info(f"it {iteration}: L={step.loss:.6g} L_top={step.loss_top:.6g} "
                        f"L_sim={step.loss_sim:.6g} d1={state.d1} b0={state.b0:.4f}")

        if initial_loss is None:
            initial_loss = step.loss
        elif initial_loss != 0 and step.loss > config.divergence_factor * abs(initial_loss):
            trace.status = TraceStatus.DIVERGED
            logger.error(f"Diverged at iteration {iteration}: L={step.loss:.6g} exceeds "
                         f"{config.divergence_factor:g} x {abs(initial_loss):.6g}")
            break

        if previous is not None and abs(step.loss - previous) < config.convergence_tol:
            quiet += 1
            if quiet >= config.convergence_window:
                trace.status = TraceStatus.CONVERGED
                break
        else:
            quiet = 0
        previous = step.loss

        coefficients = adagrad.step(coefficients, step.gradient)
    else:
        trace.status = TraceStatus.MAX_ITERS

    optimized = initial.with_spline(initial.spline.with_coefficients(coefficients))
    logger.info(f"Optimization {trace.status.value} after {len(trace.records)} iterations")

    trace.e_sim = similarity_error(
        optimized, reference, solid, etr0, config.similarity_samples, config.seed
    )
    if final_analysis:
        trace.final_report, _ = analyze_field(
            optimized, grid=config.persistence_grid, mesh_resolution=config.mesh_resolution,
            epsilon=config.epsilon, sigma=config.sigma, threads=threads,
        )
    return optimized, trace


def similarity_error(
    field: ExtendedField,
    reference: NodalField,
    solid: SolidType,
    etr0: tuple[float, float],
    n_samples: int = 100_000,
    seed: int = 0,
) -> float:
    """Mean squared difference to the reference over the originally effective region.

    Uniform samples of [0,1]^3 are kept where c_min0 <= phi <= c_max0; the
    sum of squared differences is divided by (kept - 1).

    Raises:
        DomainError: If fewer than 1000 samples are requested.
        SimilaritySampleError: If fewer than two samples survive the filter.
    """
    if n_samples < 1000:
        raise DomainError("similarity error needs at least 1000 samples")
    rng = np.random.default_rng(seed)
    uvw = rng.random((n_samples, 3))
    ref = RodField(reference, solid)(reference_points(field, reference, uvw))
    keep = (ref >= etr0[0]) & (ref <= etr0[1])
    kept = int(np.count_nonzero(keep))
    if kept < 2:
        raise SimilaritySampleError(f"only {kept} of {n_samples} samples in the effective region")
    diff = field(uvw[keep]) - ref[keep]
    return float(np.sum(diff**2) / (kept - 1))


def write_trace_csv(trace: OptimizationTrace, path: str | Path) -> None:
    """Write per-iteration losses and endpoints as CSV (empty d1_0 when missing)."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(TRACE_HEADER)
            for r in trace.records:
                writer.writerow([r.iteration, repr(r.loss), repr(r.loss_top), repr(r.loss_sim),
                                 "" if r.d1_0 is None else repr(r.d1_0),
                                 "" if r.b0_2 is None else repr(r.b0_2)])
    except OSError as e:
        raise ArtifactIOError(path, str(e)) from e
