"""Command-line interface for tpms_etr.

Commands:
- fit: fit a nodal TPMS with a trivariate B-spline
- analyze: effective threshold / density range of a nodal or spline field
- optimize: extend the effective range of a fitted field
- mesh: marching tetrahedra mesh and density at one threshold
- density-sweep: densities over a threshold range

Option precedence: settings (environment, .env) < --config JSON < flags.
Exit codes: 0 success (warnings included), 1 numerical failure or
divergence, 2 usage error.
"""

import argparse
import json
import logging
import time
from collections.abc import Callable
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
from pydantic import ValidationError

from tpms_etr import __version__
from tpms_etr.config import Settings, configure_logging, get_settings
from tpms_etr.etr import analyze_field, density_sweep
from tpms_etr.exceptions import DomainError, TpmsEtrError
from tpms_etr.mesh import (
    component_sizes,
    enclosed_volume,
    export_obj,
    export_stl,
    mesh_levels,
    sample_levels,
)
from tpms_etr.models.reports import FitReport, LossMode, ReferenceTpms, RunManifest, TraceStatus
from tpms_etr.models.tpms import NodalField, SolidType, TpmsKind
from tpms_etr.nodal import RodField, rod_threshold
from tpms_etr.optimizer import optimize, reference_etr, write_trace_csv
from tpms_etr.persistence import write_diagram_csv
from tpms_etr.spline import (
    HALF_UNIT_SYMMETRY,
    ExtendedField,
    fit_complete,
    fit_partial,
    read_spline,
    write_spline,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

FIT_METHODS = ("partial", "complete")

T = TypeVar("T")


class UsageError(DomainError):
    """Invalid command-line option value or combination."""


# =============================================================================
# Run Context
# =============================================================================

class Run:
    """Resolved options, inputs and outputs of one command."""

    def __init__(self, args: argparse.Namespace, settings: Settings, file_config: dict) -> None:
        self.args = args
        self.settings = settings
        self.file_config = file_config
        self.resolved: dict[str, Any] = {}
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.out_dir = Path(self.option("out", "."))
        self.started_at = datetime.now(timezone.utc)
        self.clock = time.perf_counter()

    def option(self, name: str, default: Any = None) -> Any:
        """Flag value, else --config value, else the settings default."""
        value = getattr(self.args, name, None)
        if value is None:
            value = self.file_config.get(name, default)
        self.resolved[name] = value
        return value

    def typed(self, name: str, kind: Callable[[Any], T], default: Any = None) -> T | None:
        """option() converted by `kind`; values it rejects are usage errors."""
        value = self.option(name, default)
        if value is None:
            return None
        try:
            return kind(value)
        except (TypeError, ValueError) as e:
            raise UsageError(f"invalid value {value!r} for {name}: {e}") from e

    def required(self, name: str, kind: Callable[[Any], T], default: Any = None) -> T:
        """typed() for options that must be present."""
        value = self.typed(name, kind, default)
        if value is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")
        return value

    def output(self, name: str) -> Path:
        """Path of an output file inside the output directory (recorded in the manifest)."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.outputs.append(str(path))
        return path

    def write_json(self, name: str, model: Any) -> None:
        self.output(name).write_text(model.model_dump_json(indent=2), encoding="utf-8")

    def write_manifest(self, exit_code: int) -> None:
        manifest = RunManifest(
            command=self.args.command,
            config={k: _plain(v) for k, v in self.resolved.items()},
            inputs=self.inputs,
            outputs=self.outputs,
            tool_version=__version__,
            started_at=self.started_at,
            wall_time=time.perf_counter() - self.clock,
            seed=self.option("seed", self.settings.RANDOM_SEED),
            exit_code=exit_code,
        )
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "manifest.json").write_text(
            manifest.model_dump_json(indent=2), encoding="utf-8"
        )


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    return value


def _input_field(run: Run) -> tuple[RodField | ExtendedField, SolidType]:
    """Field selected by --spline or --tpms/--solid, in rod form."""
    spline_path = run.option("spline")
    if spline_path:
        run.inputs.append(str(spline_path))
        field = read_spline(spline_path)
        solid = field.reference.solid if field.reference else SolidType.ROD
        return field, solid
    kind = run.typed("tpms", TpmsKind)
    if kind is None:
        raise UsageError("either --spline or --tpms is required")
    solid = run.required("solid", SolidType, SolidType.ROD.value)
    return RodField(NodalField(kind=kind), solid), solid


def _fit_method(run: Run, kind: TpmsKind) -> str:
    """--method, defaulting to partial where the half unit rebuilds the TPMS."""
    default = "partial" if kind in HALF_UNIT_SYMMETRY else "complete"
    method = run.required("method", str, default)
    if method not in FIT_METHODS:
        raise UsageError(f"--method must be one of {', '.join(FIT_METHODS)}, not {method!r}")
    if method == "partial" and kind not in HALF_UNIT_SYMMETRY:
        raise UsageError(f"{kind.value} cannot be rebuilt from its half unit; "
                         "use --method complete")
    return method


# =============================================================================
# Commands
# =============================================================================

def cmd_fit(run: Run) -> int:
    """Fit a nodal TPMS and write spline.json and fit_report.json."""
    s = run.settings
    kind = run.required("tpms", TpmsKind)
    solid = run.required("solid", SolidType, SolidType.ROD.value)
    method = _fit_method(run, kind)
    dims = run.required("dims", int, s.LATTICE_DIMS)
    samples = run.required("samples", int, s.FIT_SAMPLES)
    degree = run.required("degree", int, s.SPLINE_DEGREE)
    if dims > samples:
        raise UsageError(f"--dims {dims} exceeds --samples {samples}")
    if degree >= dims:
        raise UsageError(f"--degree {degree} needs --dims above it")

    fit = fit_partial if method == "partial" else fit_complete
    result = fit(
        NodalField(kind=kind), solid, (dims,) * 3, samples, (degree,) * 3,
        run.required("max_iters", int, s.LSPIA_MAX_ITERS), run.required("tol", float, s.LSPIA_TOL),
    )
    write_spline(run.output("spline.json"), result.field)
    run.write_json("fit_report.json", FitReport(
        method=method, mse=result.mse, iterations=result.iterations,
        converged=result.converged, lattice_dims=(dims,) * 3, samples=samples,
    ))
    logger.info(f"{kind.value} {method} fit: MSE={result.mse:.3e} ({result.iterations} iterations)")
    return EXIT_OK


def cmd_analyze(run: Run) -> int:
    """Write etr_report.json and diagram.csv for a nodal or spline field."""
    s = run.settings
    field, _ = _input_field(run)
    report, diagram = analyze_field(
        field,
        grid=run.required("grid", int, s.PERSISTENCE_GRID),
        mesh_resolution=run.required("mesh_resolution", int, s.MESH_RESOLUTION),
        epsilon=run.required("epsilon", float, s.FILTER_EPSILON),
        sigma=run.required("sigma", int, s.FILTER_SIGMA),
        sweep_steps=run.required("sweep_steps", int, 0),
        threads=run.typed("threads", int, s.THREADS),
    )
    run.write_json("etr_report.json", report)
    write_diagram_csv(diagram, run.output("diagram.csv"))
    return EXIT_OK


def cmd_optimize(run: Run) -> int:
    """Fit, optimize and write the optimized spline, trace and before/after reports."""
    s = run.settings
    config = s.optimizer_config(
        expansion_ratio=run.option("mu", s.EXPANSION_RATIO),
        weight=run.option("alpha", s.SIMILARITY_WEIGHT),
        learning_rate=run.option("eta", s.LEARNING_RATE),
        max_iters=run.option("max_iters", s.OPTIMIZER_MAX_ITERS),
        persistence_grid=run.option("grid", s.PERSISTENCE_GRID),
        mesh_resolution=run.option("mesh_resolution", s.MESH_RESOLUTION),
        similarity_samples=run.option("similarity_samples", s.SIMILARITY_SAMPLES),
        loss_mode=run.required("loss", LossMode, LossMode.BOUNDED.value),
        seed=run.option("seed", s.RANDOM_SEED),
    )
    threads = run.typed("threads", int, s.THREADS)

    spline_path = run.option("spline")
    if spline_path:
        run.inputs.append(str(spline_path))
        initial = read_spline(spline_path)
        if initial.reference is None:
            raise UsageError(f"{spline_path} carries no reference TPMS")
        reference = initial.reference
    else:
        kind = run.typed("tpms", TpmsKind)
        if kind is None:
            raise UsageError("either --spline or --tpms is required")
        reference = ReferenceTpms(
            kind=kind, solid=run.required("solid", SolidType, SolidType.ROD.value)
        )
        dims = run.required("dims", int, s.LATTICE_DIMS)
        samples = run.required("samples", int, s.FIT_SAMPLES)
        if dims > samples:
            raise UsageError(f"--dims {dims} exceeds --samples {samples}")
        fit = fit_partial if _fit_method(run, kind) == "partial" else fit_complete
        initial = fit(NodalField(kind=reference.kind, frequencies=reference.frequencies),
                      reference.solid, (dims,) * 3, samples, (s.SPLINE_DEGREE,) * 3,
                      s.LSPIA_MAX_ITERS, s.LSPIA_TOL).field
        write_spline(run.output("spline_initial.json"), initial)

    nodal = NodalField(kind=reference.kind, frequencies=reference.frequencies)
    etr0 = reference_etr(nodal, reference.solid, config)
    before, _ = analyze_field(initial, grid=config.persistence_grid,
                              mesh_resolution=config.mesh_resolution, epsilon=config.epsilon,
                              sigma=config.sigma, threads=threads)
    run.write_json("etr_before.json", before)

    optimized, trace = optimize(initial, nodal, reference.solid, config, etr0, threads=threads)
    write_spline(run.output("spline_optimized.json"), optimized)
    write_trace_csv(trace, run.output("trace.csv"))
    run.write_json("trace.json", trace)
    if trace.final_report is not None:
        run.write_json("etr_after.json", trace.final_report)

    if trace.status is TraceStatus.DIVERGED:
        return EXIT_FAILURE
    return EXIT_OK


def cmd_mesh(run: Run) -> int:
    """Write mesh.stl (and mesh.obj with --obj) plus mesh_report.json."""
    s = run.settings
    field, solid = _input_field(run)
    c = run.required("c", float)
    resolution = run.required("resolution", int, s.MESH_RESOLUTION)
    box = field.analysis_box()
    levels = sample_levels(field, box, resolution)
    mesh = mesh_levels(levels, box, rod_threshold(c, solid), run.typed("threads", int, s.THREADS))

    export_stl(mesh, run.output(run.option("stl_name", "mesh.stl")))
    if run.option("obj", False):
        export_obj(mesh, run.output("mesh.obj"))
    density = float(np.clip(enclosed_volume(mesh) / box.volume, 0.0, 1.0))
    sizes = component_sizes(mesh)
    report = {
        "c": c,
        "density": density,
        "triangles": mesh.num_triangles,
        "vertices": len(mesh.vertices),
        "components": len(sizes),
        "largest_component_share": sizes[0] / mesh.num_triangles if sizes else 0.0,
    }
    run.output("mesh_report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    logger.info(f"Mesh at c={c:g}: density {density:.4f}, {len(sizes)} component(s)")
    return EXIT_OK


def cmd_density_sweep(run: Run) -> int:
    """Write density.csv with (c, rho) rows over [c_lo, c_hi]."""
    s = run.settings
    field, solid = _input_field(run)
    c_lo, c_hi = run.required("c_lo", float), run.required("c_hi", float)
    steps = run.required("steps", int, 10)
    if steps < 1:
        raise UsageError("--steps must be at least 1")
    thresholds = np.linspace(c_lo, c_hi, steps).tolist()
    rows = density_sweep(
        field, field.analysis_box(), [rod_threshold(c, solid) for c in thresholds],
        run.required("resolution", int, s.MESH_RESOLUTION), run.typed("threads", int, s.THREADS),
    )
    path = run.output(run.option("csv_name", "density.csv"))
    lines = ["c,rho"] + [f"{c!r},{rho!r}" for c, (_, rho) in zip(thresholds, rows)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS: dict[str, Callable[[Run], int]] = {
    "fit": cmd_fit,
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "mesh": cmd_mesh,
    "density-sweep": cmd_density_sweep,
}


# =============================================================================
# Parser
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    """Argument parser; unset flags stay None so --config and settings can fill them."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of option values")
    common.add_argument("--out", help="Output directory (default: current directory)")
    common.add_argument("--threads", type=int, help="Cap on worker threads")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")

    field_input = argparse.ArgumentParser(add_help=False)
    field_input.add_argument("--tpms", choices=[k.value for k in TpmsKind])
    field_input.add_argument("--solid", choices=[t.value for t in SolidType])
    field_input.add_argument("--spline", type=Path, help="Spline JSON written by fit/optimize")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("--method", choices=["partial", "complete"])
    fitting.add_argument("--dims", type=int, help="Coefficients per axis")
    fitting.add_argument("--samples", type=int, help="Samples per axis")

    parser = argparse.ArgumentParser(
        prog="tpms-etr", description="Effective threshold range analysis and extension of TPMS"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[common, fitting], help="Fit a nodal TPMS")
    fit.add_argument("--tpms", choices=[k.value for k in TpmsKind], required=True)
    fit.add_argument("--solid", choices=[t.value for t in SolidType])
    fit.add_argument("--degree", type=int)
    fit.add_argument("--max-iters", dest="max_iters", type=int)
    fit.add_argument("--tol", type=float)

    analyze = sub.add_parser("analyze", parents=[common, field_input], help="ETR and EDR")
    analyze.add_argument("--grid", type=int, help="Persistence vertices per axis")
    analyze.add_argument("--mesh-resolution", dest="mesh_resolution", type=int)
    analyze.add_argument("--epsilon", type=float)
    analyze.add_argument("--sigma", type=int)
    analyze.add_argument("--sweep-steps", dest="sweep_steps", type=int)

    opt = sub.add_parser("optimize", parents=[common, field_input, fitting],
                         help="Extend the effective threshold range")
    opt.add_argument("--mu", type=float, help="Expansion ratio")
    opt.add_argument("--alpha", type=float, help="Similarity weight in [0, 1]")
    opt.add_argument("--eta", type=float, help="Learning rate")
    opt.add_argument("--max-iters", dest="max_iters", type=int)
    opt.add_argument("--grid", type=int)
    opt.add_argument("--mesh-resolution", dest="mesh_resolution", type=int)
    opt.add_argument("--similarity-samples", dest="similarity_samples", type=int)
    opt.add_argument("--loss", choices=[m.value for m in LossMode])

    mesh = sub.add_parser("mesh", parents=[common, field_input], help="Mesh one threshold")
    mesh.add_argument("--c", type=float, required=True, help="Threshold")
    mesh.add_argument("--resolution", type=int)
    mesh.add_argument("--stl-name", dest="stl_name")
    mesh.add_argument("--obj", action="store_true", default=None)

    sweep = sub.add_parser("density-sweep", parents=[common, field_input],
                           help="Relative density over a threshold range")
    sweep.add_argument("--c-lo", dest="c_lo", type=float, required=True)
    sweep.add_argument("--c-hi", dest="c_hi", type=float, required=True)
    sweep.add_argument("--steps", type=int)
    sweep.add_argument("--resolution", type=int)
    sweep.add_argument("--csv-name", dest="csv_name")
    return parser


def _load_config(
    parser: argparse.ArgumentParser, args: argparse.Namespace, path: Path | None
) -> dict:
    """Option values from a JSON object keyed by option name."""
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        parser.error(f"cannot read --config {path}: {e}")
    if not isinstance(data, dict):
        parser.error(f"--config {path} must hold a JSON object")
    values = {key.replace("-", "_"): value for key, value in data.items()}
    unknown = sorted(set(values) - set(vars(args)))
    if unknown:
        parser.error(f"unknown option(s) in --config {path}: {', '.join(unknown)}")
    return values


def main(argv: list[str] | None = None) -> int:
    """Run one command and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    file_config = _load_config(parser, args, args.config)
    settings = get_settings()
    configure_logging(args.log_level or file_config.get("log_level") or settings.LOG_LEVEL)

    run = Run(args, settings, file_config)
    try:
        code = COMMANDS[args.command](run)
    except (UsageError, ValidationError) as e:
        logger.error(str(e))
        code = EXIT_USAGE
    except (TpmsEtrError, FloatingPointError) as e:
        logger.error(f"{args.command} failed: {e}")
        code = EXIT_FAILURE
    run.write_manifest(code)
    return code
