from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .assembly import default_quadrature_order
from .geometry import GeometryProvider
from .mesh import ParamMesh, lagrange_points
from .models import MaterialParams, RuleSettings, ValidationIssue, ValidationResult
from .quadrature import quadrature_rule
from .shellmodel import AREA_FLOOR, geometry_table


@dataclass(frozen=True)
class RuleDefinition:
    rule_id: str
    label: str
    default_threshold: Optional[float]
    default_severity: str = "error"


RULE_DEFINITIONS: Dict[str, RuleDefinition] = {
    "material_solvability": RuleDefinition("material_solvability", "Material parameters admit a minimizer", None),
    "thickness_curvature_bound": RuleDefinition("thickness_curvature_bound", "Thickness times curvature bound", 0.5),
    "immersion": RuleDefinition("immersion", "Minimum area element", AREA_FLOOR),
    "rotation_order": RuleDefinition("rotation_order", "Rotation order not above deformation order", None, default_severity="warning"),
    "coupling_modulus_ratio": RuleDefinition("coupling_modulus_ratio", "Cosserat coupling modulus ratio", 1e-3, default_severity="warning"),
}


def build_default_rules(overrides: Dict[str, RuleSettings] | None = None) -> Dict[str, RuleSettings]:
    rules: Dict[str, RuleSettings] = {}
    overrides = overrides or {}
    for rule_id, definition in RULE_DEFINITIONS.items():
        override = overrides.get(rule_id)
        if override is not None:
            rules[rule_id] = RuleSettings(
                enabled=override.enabled,
                threshold=override.threshold if override.threshold is not None else definition.default_threshold,
                severity=override.severity,
            )
        else:
            rules[rule_id] = RuleSettings(
                enabled=True,
                threshold=definition.default_threshold,
                severity=definition.default_severity,
            )
    return rules


def make_issue(rule_id: str, severity: str, summary: str, detail: str) -> ValidationIssue:
    return ValidationIssue(rule_id=rule_id, severity=severity, summary=summary, detail=detail)


def validate_run(
    mesh: ParamMesh,
    provider: GeometryProvider,
    material: MaterialParams,
    orders: Sequence[int],
    rules: Dict[str, RuleSettings],
    quadrature_order: Optional[int] = None,
) -> ValidationResult:
    """Checks a run setup before assembly; ``orders`` is (p1, p2)."""
    result = ValidationResult()
    deformation_order, rotation_order = (int(p) for p in orders)

    rule = quadrature_rule(quadrature_order or default_quadrature_order(deformation_order, rotation_order, mesh.geometry_order))
    _, jac, sec = provider.evaluate_grid(mesh.n_triangles, rule.points)
    area = np.linalg.norm(np.cross(jac[..., 0], jac[..., 1]), axis=-1)
    min_area = float(area.min())
    worst_area = int(np.argmin(area.min(axis=1)))
    if min_area > 0.0:
        table = geometry_table(jac, sec)
        curvature = np.abs(table["principal"]).max(axis=-1)
        max_hk = float(material.thickness * curvature.max())
        worst_curvature = int(np.argmax(curvature.max(axis=1)))
    else:
        max_hk, worst_curvature = float("nan"), worst_area

    result.metrics.update(
        {
            "triangles": int(mesh.n_triangles),
            "deformation_nodes": int(lagrange_points(mesh, deformation_order).n_points),
            "rotation_nodes": int(lagrange_points(mesh, rotation_order).n_points),
            "quadrature_order": int(rule.order),
            "min_area_element": min_area,
            "max_thickness_curvature": max_hk,
            "coupling_ratio": float(material.mu_c / material.mu) if material.mu != 0.0 else float("inf"),
        }
    )

    def enabled(rule_id: str) -> bool:
        return rules.get(rule_id, RuleSettings()).enabled

    def severity(rule_id: str) -> str:
        return rules.get(rule_id, RuleSettings()).severity

    def threshold(rule_id: str, fallback: float) -> float:
        value = rules.get(rule_id, RuleSettings(threshold=fallback)).threshold
        return float(fallback if value is None else value)

    if enabled("material_solvability") and not material.is_solvable:
        result.issues.append(
            make_issue(
                "material_solvability",
                severity("material_solvability"),
                "Material parameters are not admissible",
                f"Need mu > 0, mu_c > 0 and 2 lambda + mu > 0; got mu = {material.mu:g}, "
                f"mu_c = {material.mu_c:g}, lambda = {material.lame_lambda:g}.",
            )
        )

    if enabled("immersion"):
        floor = threshold("immersion", AREA_FLOOR)
        if not min_area >= floor:
            result.issues.append(
                make_issue(
                    "immersion",
                    severity("immersion"),
                    "Parametrization degenerates",
                    f"Area element {min_area:.3g} on triangle {worst_area} is below the configured {floor:g}.",
                )
            )

    if enabled("thickness_curvature_bound") and np.isfinite(max_hk):
        bound = threshold("thickness_curvature_bound", 0.5)
        if max_hk >= bound:
            result.issues.append(
                make_issue(
                    "thickness_curvature_bound",
                    severity("thickness_curvature_bound"),
                    "Shell too thick for its curvature",
                    f"h |k| reaches {max_hk:.3g} on triangle {worst_curvature}, not below the configured {bound:g}.",
                )
            )

    if enabled("rotation_order") and rotation_order > deformation_order:
        result.issues.append(
            make_issue(
                "rotation_order",
                severity("rotation_order"),
                "Rotation order above deformation order",
                f"Rotation order {rotation_order} exceeds deformation order {deformation_order}; expect a stiffer response.",
            )
        )

    if enabled("coupling_modulus_ratio") and material.mu > 0.0:
        lower = threshold("coupling_modulus_ratio", 1e-3)
        ratio = material.mu_c / material.mu
        if not lower <= ratio <= 1.0:
            result.issues.append(
                make_issue(
                    "coupling_modulus_ratio",
                    severity("coupling_modulus_ratio"),
                    "Coupling modulus outside the usual range",
                    f"mu_c / mu = {ratio:.3g} lies outside [{lower:g}, 1].",
                )
            )

    return result
