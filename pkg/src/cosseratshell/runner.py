"""Batch driver: build a ShellProblem from a RunConfig, run its load program, write artifacts."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .assembly import ShellProblem
from .configuration import load_rule_settings, save_run_config
from .errors import ConfigError, LoadProgramAborted, ShellError
from .exporter import export_vtk, probe_values, write_history, write_report
from .generator import generate_preset
from .geometry import FEGeometry, GeometryProvider
from .importer import load_mesh
from .mesh import ParamMesh
from .models import RunConfig, ValidationResult
from .solver import StepResult, run_load_program
from .validation import RULE_DEFINITIONS, build_default_rules, validate_run


logger = logging.getLogger(__name__)


class ValidationFailed(ConfigError):
    def __init__(self, result: ValidationResult):
        summary = "; ".join(f"{issue.rule_id}: {issue.detail}" for issue in result.issues if issue.severity == "error")
        super().__init__(f"{result.error_count} validation error(s): {summary}")
        self.result = result


@dataclass
class RunOutcome:
    config: RunConfig
    validation: ValidationResult
    steps: List[StepResult] = field(default_factory=list)
    report: Dict[str, Any] = field(default_factory=dict)
    out_dir: str = ""


def build_geometry(config: RunConfig) -> Tuple[ParamMesh, GeometryProvider]:
    spec = config.mesh
    if spec.path is not None:
        if config.geometry == "analytic":
            raise ConfigError("config.geometry: 'analytic' needs a preset mesh, not an imported one")
        mesh = load_mesh(spec.path)
        return mesh, FEGeometry(mesh)
    try:
        preset = generate_preset(spec.preset, spec.resolution, order=spec.geometry_order)
    except ValueError as exc:
        raise ConfigError(f"config.mesh: {exc}") from exc
    provider = preset.analytic if config.geometry == "analytic" else FEGeometry(preset.mesh)
    return preset.mesh, provider


def build_problem(config: RunConfig, rules_path: Optional[str] = None) -> Tuple[ShellProblem, ValidationResult]:
    mesh, provider = build_geometry(config)
    overrides = load_rule_settings(rules_path) if rules_path else {}
    overrides.update(config.rules)
    validation = validate_run(
        mesh,
        provider,
        config.material,
        (config.deformation_order, config.rotation_order),
        build_default_rules(overrides),
        config.quadrature_order,
    )
    for issue in validation.issues:
        log = logger.error if issue.severity == "error" else logger.warning
        log("[%s] %s: %s", RULE_DEFINITIONS[issue.rule_id].label, issue.summary, issue.detail)
    if not validation.is_valid:
        raise ValidationFailed(validation)

    problem = ShellProblem(
        mesh,
        provider,
        config.material,
        deformation_order=config.deformation_order,
        rotation_order=config.rotation_order,
        interpolation=config.interpolation,
        variant=config.variant,
        quadrature_order=config.quadrature_order,
        loads=config.loads,
    )
    problem = problem.with_boundary_conditions(problem.boundary_conditions_from(config.boundary_conditions, 0.0))
    logger.info(
        "%s: %d triangles, %d deformation and %d rotation nodes, quadrature order %d",
        config.name,
        mesh.n_triangles,
        problem.n_deformation,
        problem.n_rotation,
        problem.rule.order,
    )
    return problem, validation


def _step_entry(result: StepResult, probes: Dict[str, float]) -> Dict[str, Any]:
    report = result.report
    return {
        "step": result.step,
        "parameter": result.parameter,
        "energy": float(report.energy),
        "gradient_norm": float(report.gradient_norm),
        "iterations": int(report.iterations),
        "stop_reason": report.stop_reason,
        "probes": {name: float(value) for name, value in probes.items()},
    }


def run(config: RunConfig, out_dir: Optional[str] = None, rules_path: Optional[str] = None) -> RunOutcome:
    """Solve every load step of ``config`` and write VTK, report, history and config echo to ``out_dir``."""
    out_dir = out_dir or config.output
    os.makedirs(out_dir, exist_ok=True)
    save_run_config(os.path.join(out_dir, "config.yaml"), config)

    problem, validation = build_problem(config, rules_path)
    outcome = RunOutcome(config=config, validation=validation, out_dir=out_dir)
    entries: List[Dict[str, Any]] = []
    frames = []

    def on_step(result: StepResult) -> None:
        export_vtk(result.configuration, result.problem, os.path.join(out_dir, f"step_{result.step}.vtk"))
        values = probe_values(result.configuration, result.problem, config.probes)
        entries.append(_step_entry(result, values))
        frame = result.report.to_frame()
        frame.insert(0, "parameter", result.parameter)
        frame.insert(0, "step", result.step)
        frames.append(frame)
        for name, value in values.items():
            logger.info("step %d probe %s = %.10g", result.step, name, value)

    report: Dict[str, Any] = {
        "name": config.name,
        "status": "ok",
        "metrics": validation.metrics,
        "warnings": [issue.summary for issue in validation.issues if issue.severity != "error"],
        "steps": entries,
    }
    try:
        outcome.steps = run_load_program(
            problem.initial_configuration(),
            problem,
            config.program,
            config.solver,
            dirichlet=config.boundary_conditions,
            on_step=on_step,
        )
    except LoadProgramAborted as exc:
        report["status"] = "aborted"
        report["error"] = {"step": exc.step, "parameter": exc.parameter, "type": type(exc.cause).__name__, "message": str(exc.cause)}
        raise
    except ShellError as exc:
        report["status"] = "failed"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        raise
    finally:
        outcome.report = report
        write_report(os.path.join(out_dir, "report.yaml"), report)
        write_history(os.path.join(out_dir, "history.csv"), frames)
    return outcome
