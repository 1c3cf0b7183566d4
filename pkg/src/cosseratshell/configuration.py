from __future__ import annotations

import os
from dataclasses import asdict, fields
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
import yaml

from .errors import ConfigError, IoError
from .models import (
    DirichletSpec,
    ExperimentConfig,
    LoadProgram,
    LoadSpec,
    MaterialParams,
    MeshSpec,
    ProbeSpec,
    RuleSettings,
    RunConfig,
    Selector,
    Traction,
    TrustRegionSettings,
    VolumeLoad,
    as_vector3,
)


DEFAULT_SHELL_CONFIG = "config/shell_defaults.yaml"
DEFAULT_RULES_CONFIG = "config/validation_rules.yaml"
DEFAULT_EXPERIMENTS_DIR = "experiments"

_MATERIAL_KEYS = {
    "lambda": "lame_lambda",
    "mu": "mu",
    "mu_c": "mu_c",
    "L_c": "length_c",
    "b1": "b1",
    "b2": "b2",
    "b3": "b3",
    "thickness": "thickness",
}
_SOLVER_KEYS = [f.name for f in fields(TrustRegionSettings)]


def _read_yaml(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as exc:
        raise IoError(f"cannot read '{path}': {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"'{path}' is not valid YAML/JSON: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"'{path}' must contain a mapping at the top level")
    return data


def load_shell_defaults(config_path: str = DEFAULT_SHELL_CONFIG) -> Dict[str, Dict[str, float]]:
    config = _read_yaml(config_path) if os.path.isfile(config_path) else {}
    material = config.get("material", {}) or {}
    solver = config.get("solver", {}) or {}
    mu = float(material.get("mu", MaterialParams.mu))
    return {
        "material": {
            "lambda": float(material.get("lambda", MaterialParams.lame_lambda)),
            "mu": mu,
            "mu_c": float(material.get("mu_c", 0.1 * mu)),
            "L_c": float(material.get("L_c", MaterialParams.length_c)),
            "b1": float(material.get("b1", MaterialParams.b1)),
            "b2": float(material.get("b2", MaterialParams.b2)),
            "b3": float(material.get("b3", MaterialParams.b3)),
            "thickness": float(material.get("thickness", MaterialParams.thickness)),
        },
        "solver": {key: solver[key] for key in _SOLVER_KEYS if key in solver},
    }


# field coercion; every failure names the offending key


def _number(data: Dict[str, Any], key: str, default: Any, where: str, kind=float):
    value = data.get(key, default)
    if value is None:
        return None
    try:
        result = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}") from None
    if kind is float and not np.isfinite(result):
        raise ConfigError(f"{where}.{key}: value must be finite")
    return result


def _choice(data: Dict[str, Any], key: str, default: str, options, where: str) -> str:
    value = str(data.get(key, default))
    if value not in options:
        raise ConfigError(f"{where}.{key}: '{value}' is not one of {', '.join(options)}")
    return value


def _mapping(data: Dict[str, Any], key: str, where: str) -> Dict[str, Any]:
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"{where}.{key}: expected a mapping")
    return value


def _listing(data: Dict[str, Any], key: str, where: str) -> List[Any]:
    value = data.get(key) or []
    if not isinstance(value, list):
        raise ConfigError(f"{where}.{key}: expected a list")
    return value


def _entries(data: Dict[str, Any], key: str, where: str) -> Iterator[Tuple[str, Dict[str, Any]]]:
    for index, entry in enumerate(_listing(data, key, where)):
        label = f"{where}.{key}[{index}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{label}: expected a mapping")
        yield label, entry


def _vector(value: Any, where: str):
    try:
        return as_vector3(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _selector(value: Any, where: str) -> Selector:
    try:
        return Selector.parse(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _order(data: Dict[str, Any], key: str, default: int, where: str) -> int:
    value = _number(data, key, default, where, int)
    if value not in (1, 2):
        raise ConfigError(f"{where}.{key}: order must be 1 or 2, got {value}")
    return value


def _parse_mesh(data: Dict[str, Any], base_dir: str) -> MeshSpec:
    mesh = _mapping(data, "mesh", "config")
    preset = mesh.get("preset")
    path = mesh.get("path")
    if (preset is None) == (path is None):
        raise ConfigError("config.mesh: give exactly one of 'preset' or 'path'")
    if path is not None and not os.path.isabs(str(path)):
        path = os.path.normpath(os.path.join(base_dir, str(path)))
    resolution = mesh.get("resolution") or []
    if isinstance(resolution, (int, float)):
        resolution = [resolution]
    try:
        resolution = tuple(int(r) for r in resolution)
    except (TypeError, ValueError):
        raise ConfigError(f"config.mesh.resolution: expected integers, got {resolution!r}") from None
    return MeshSpec(
        preset=None if preset is None else str(preset),
        resolution=resolution,
        geometry_order=_order(mesh, "geometry_order", 2, "config.mesh"),
        path=None if path is None else str(path),
    )


def _parse_material(data: Dict[str, Any], defaults: Dict[str, float]) -> MaterialParams:
    block = _mapping(data, "material", "config")
    unknown = set(block) - set(_MATERIAL_KEYS)
    if unknown:
        raise ConfigError(f"config.material: unknown keys {sorted(unknown)}")
    values = {}
    for key, attr in _MATERIAL_KEYS.items():
        fallback = defaults[key]
        if key == "mu_c" and "mu" in block and "mu_c" not in block:
            fallback = 0.1 * float(block["mu"])
        values[attr] = _number(block, key, fallback, "config.material")
    if values["thickness"] <= 0.0:
        raise ConfigError("config.material.thickness: must be positive")
    return MaterialParams(**values)


def _parse_boundary_conditions(data: Dict[str, Any]) -> List[DirichletSpec]:
    specs = []
    for where, entry in _entries(data, "boundary_conditions", "config"):
        components = entry.get("components", [True, True, True])
        if not isinstance(components, list) or len(components) != 3:
            raise ConfigError(f"{where}.components: expected three booleans")
        specs.append(
            DirichletSpec(
                selector=_selector(entry.get("select", "all"), f"{where}.select"),
                components=tuple(bool(c) for c in components),
                rotation=bool(entry.get("rotation", True)),
                motion=_choice(entry, "motion", "fixed", ("fixed", "rotate", "translate"), where),
                axis=_vector(entry.get("axis", (0.0, 0.0, 1.0)), f"{where}.axis"),
                center=_vector(entry.get("center", (0.0, 0.0, 0.0)), f"{where}.center"),
            )
        )
    return specs


def _parse_loads(data: Dict[str, Any]) -> LoadSpec:
    block = _mapping(data, "loads", "config")
    volume = []
    for where, entry in _entries(block, "volume", "config.loads"):
        volume.append(
            VolumeLoad(
                selector=_selector(entry.get("select", "all"), f"{where}.select"),
                value=_vector(entry.get("value"), f"{where}.value"),
                per_volume=bool(entry.get("per_volume", False)),
            )
        )
    traction = []
    for where, entry in _entries(block, "traction", "config.loads"):
        traction.append(Traction(selector=_selector(entry.get("select", "all"), f"{where}.select"), value=_vector(entry.get("value"), f"{where}.value")))
    scale = _number(block, "scale", 1.0, "config.loads")
    return LoadSpec(volume=tuple(volume), traction=tuple(traction), scale=scale)


def _parse_program(data: Dict[str, Any]) -> LoadProgram:
    block = _mapping(data, "program", "config")
    steps = block.get("steps", [1.0])
    if isinstance(steps, dict):
        count = _number(steps, "count", None, "config.program.steps", int)
        if count is None or count < 1:
            raise ConfigError("config.program.steps.count: must be a positive integer")
        start = _number(steps, "start", 0.0, "config.program.steps")
        step = _number(steps, "step", 1.0, "config.program.steps")
        steps = [start + k * step for k in range(count)]
    if not isinstance(steps, list):
        raise ConfigError("config.program.steps: expected a list or a start/step/count mapping")
    try:
        return LoadProgram(
            parameters=tuple(float(s) for s in steps),
            drives=_choice(block, "drives", "load", ("load", "dirichlet"), "config.program"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config.program: {exc}") from None


def _parse_solver(data: Dict[str, Any], defaults: Dict[str, Any], material: MaterialParams) -> TrustRegionSettings:
    block = dict(defaults)
    block.update(_mapping(data, "solver", "config"))
    unknown = set(block) - set(_SOLVER_KEYS)
    if unknown:
        raise ConfigError(f"config.solver: unknown keys {sorted(unknown)}")
    if "gradient_tolerance" not in block:
        block["gradient_tolerance"] = 1e-6 * material.mu * material.thickness
    values = {}
    for f in fields(TrustRegionSettings):
        if f.name in block:
            values[f.name] = _number(block, f.name, None, "config.solver", int if f.type in ("int", int) else float)
    try:
        return TrustRegionSettings(**values)
    except ValueError as exc:
        raise ConfigError(f"config.solver: {exc}") from None


def _parse_probes(data: Dict[str, Any]) -> List[ProbeSpec]:
    probes = []
    for index, (where, entry) in enumerate(_entries(data, "probes", "config")):
        kind = _choice(entry, "kind", "point_deflection", ("point_deflection", "ring_height"), where)
        target = entry.get("target")
        if kind == "point_deflection" and target is None:
            raise ConfigError(f"{where}.target: point_deflection needs a target point")
        component = _number(entry, "component", 3, where, int)
        if component not in (1, 2, 3):
            raise ConfigError(f"{where}.component: must be 1, 2 or 3")
        probes.append(
            ProbeSpec(
                name=str(entry.get("name", f"probe_{index}")),
                kind=kind,
                target=None if target is None else _vector(target, f"{where}.target"),
                component=component,
                selector=_selector(entry.get("select", "all"), f"{where}.select"),
            )
        )
    return probes


def _parse_rules(data: Dict[str, Any]) -> Dict[str, RuleSettings]:
    rules: Dict[str, RuleSettings] = {}
    for rule_id, values in _mapping(data, "rules", "config").items():
        where = f"config.rules.{rule_id}"
        values = values or {}
        if not isinstance(values, dict):
            raise ConfigError(f"{where}: expected a mapping")
        rules[rule_id] = RuleSettings(
            enabled=bool(values.get("enabled", True)),
            threshold=_number(values, "threshold", None, where),
            severity=_choice(values, "severity", "error", ("error", "warning"), where),
        )
    return rules


def parse_run_config(data: Dict[str, Any], base_dir: str = ".", defaults: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    defaults = defaults or load_shell_defaults(DEFAULT_SHELL_CONFIG)
    orders = _mapping(data, "orders", "config")
    material = _parse_material(data, defaults["material"])
    quadrature_order = _number(data, "quadrature_order", None, "config", int)
    return RunConfig(
        name=str(data.get("name", "run")),
        mesh=_parse_mesh(data, base_dir),
        geometry=_choice(data, "geometry", "fe", ("fe", "analytic"), "config"),
        deformation_order=_order(orders, "deformation", 2, "config.orders"),
        rotation_order=_order(orders, "rotation", 1, "config.orders"),
        interpolation=_choice(data, "interpolation", "geodesic", ("geodesic", "projection"), "config"),
        variant=_choice(data, "variant", "main", ("main", "birsan"), "config"),
        quadrature_order=quadrature_order,
        material=material,
        boundary_conditions=_parse_boundary_conditions(data),
        loads=_parse_loads(data),
        program=_parse_program(data),
        solver=_parse_solver(data, defaults["solver"], material),
        probes=_parse_probes(data),
        rules=_parse_rules(data),
        output=str(data.get("output", os.path.join("results", str(data.get("name", "run"))))),
    )


def load_run_config(config_path: str, defaults: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    data = _read_yaml(config_path)
    config = parse_run_config(data, os.path.dirname(os.path.abspath(config_path)), defaults)
    config.source_path = config_path
    return config


def resolve_config_path(name_or_path: str, experiments_dir: str = DEFAULT_EXPERIMENTS_DIR) -> str:
    """A config file path, or the name of an experiment folder."""
    if os.path.isfile(name_or_path):
        return name_or_path
    for experiment in discover_experiment_configs(experiments_dir):
        if experiment.name == name_or_path:
            return experiment.config_path
    raise ConfigError(f"'{name_or_path}' is neither a config file nor an experiment in '{experiments_dir}'")


def discover_experiment_configs(base_dir: str = DEFAULT_EXPERIMENTS_DIR) -> List[ExperimentConfig]:
    experiments: List[ExperimentConfig] = []
    if not os.path.isdir(base_dir):
        return experiments

    for entry in sorted(os.listdir(base_dir)):
        folder = os.path.join(base_dir, entry)
        if not os.path.isdir(folder):
            continue
        config_path = os.path.join(folder, f"{entry}_config.yaml")
        if not os.path.isfile(config_path):
            continue
        experiments.append(ExperimentConfig(name=entry, config_path=config_path))
    return experiments


def load_rule_settings(config_path: str = DEFAULT_RULES_CONFIG) -> Dict[str, RuleSettings]:
    if not os.path.isfile(config_path):
        return {}
    return _parse_rules(_read_yaml(config_path))


def dump_rule_settings(rule_settings: Dict[str, RuleSettings]) -> Dict[str, Dict[str, object]]:
    return {
        rule_id: {
            "enabled": settings.enabled,
            "threshold": settings.threshold,
            "severity": settings.severity,
        }
        for rule_id, settings in rule_settings.items()
    }


def dump_run_config(config: RunConfig) -> Dict[str, Any]:
    material = config.material
    return {
        "name": config.name,
        "mesh": {
            "preset": config.mesh.preset,
            "resolution": list(config.mesh.resolution),
            "geometry_order": config.mesh.geometry_order,
            "path": config.mesh.path,
        },
        "geometry": config.geometry,
        "orders": {"deformation": config.deformation_order, "rotation": config.rotation_order},
        "interpolation": config.interpolation,
        "variant": config.variant,
        "quadrature_order": config.quadrature_order,
        "material": {key: float(getattr(material, attr)) for key, attr in _MATERIAL_KEYS.items()},
        "boundary_conditions": [
            {
                "select": spec.selector.dump(),
                "components": list(spec.components),
                "rotation": spec.rotation,
                "motion": spec.motion,
                "axis": list(spec.axis),
                "center": list(spec.center),
            }
            for spec in config.boundary_conditions
        ],
        "loads": {
            "volume": [
                {"select": piece.selector.dump(), "value": list(piece.value), "per_volume": piece.per_volume}
                for piece in config.loads.volume
            ],
            "traction": [{"select": piece.selector.dump(), "value": list(piece.value)} for piece in config.loads.traction],
            "scale": config.loads.scale,
        },
        "program": {"drives": config.program.drives, "steps": list(config.program.parameters)},
        "solver": asdict(config.solver),
        "probes": [
            {
                "name": probe.name,
                "kind": probe.kind,
                "target": None if probe.target is None else list(probe.target),
                "component": probe.component,
                "select": probe.selector.dump(),
            }
            for probe in config.probes
        ],
        "rules": dump_rule_settings(config.rules),
        "output": config.output,
    }


def save_run_config(filename: str, config: RunConfig) -> None:
    try:
        with open(filename, "w", encoding="utf-8") as handle:
            yaml.safe_dump(dump_run_config(config), handle, sort_keys=False)
    except OSError as exc:
        raise IoError(f"cannot write '{filename}': {exc}") from exc
