from __future__ import annotations

import logging
from typing import Any, Dict, Iterable, List, Sequence

import meshio
import numpy as np
import pandas as pd
import yaml
from scipy.spatial import cKDTree

from .assembly import Configuration, ShellProblem
from .errors import EmptySelection, IoError
from .mesh import lagrange_points
from .models import ProbeSpec, Selector


logger = logging.getLogger(__name__)

# vertices, then midpoints of edges (0,1), (1,2), (2,0)
_TO_MESHIO_TRIANGLE6 = [0, 1, 2, 5, 3, 4]


def export_order(problem: ShellProblem) -> int:
    return min(max(problem.deformation_layout.order, problem.mesh.geometry_order), 2)


def nodal_fields(config: Configuration, problem: ShellProblem) -> Dict[str, np.ndarray]:
    """Deformed points and point data on the export layout."""
    problem.check_configuration(config)
    layout = lagrange_points(problem.mesh, export_order(problem))
    triangles = layout.owners[:, 0]
    points = layout.reference_points[layout.owners[:, 1]]
    reference, _, _ = problem.provider.evaluate(triangles, points)
    position, Q, E, Ke = problem.sample(config, triangles, points)
    return {
        "points": position,
        "displacement": position - reference,
        "d1": Q[:, :, 0],
        "d2": Q[:, :, 1],
        "d3": Q[:, :, 2],
        "strain_norm": np.linalg.norm(E, axis=(1, 2)),
        "curvature_norm": np.linalg.norm(Ke, axis=(1, 2)),
        "_cells": layout.elements,
    }


def export_vtk(config: Configuration, problem: ShellProblem, path: str) -> None:
    fields = nodal_fields(config, problem)
    elements = fields.pop("_cells")
    points = fields.pop("points")
    if elements.shape[1] == 6:
        cells = [("triangle6", elements[:, _TO_MESHIO_TRIANGLE6])]
    else:
        cells = [("triangle", elements)]
    try:
        meshio.write_points_cells(path, points, cells, point_data=fields, file_format="vtk", binary=False)
    except OSError as exc:
        raise IoError(f"cannot write VTK file '{path}': {exc}") from exc
    logger.debug("wrote %s (%d points, %d cells)", path, points.shape[0], elements.shape[0])


# probes


def point_deflection(config: Configuration, problem: ShellProblem, target: Sequence[float], component: int = 3) -> float:
    """Displacement component of the deformation node nearest to ``target`` in the reference configuration."""
    if component not in (1, 2, 3):
        raise ValueError(f"component must be 1, 2 or 3, got {component}")
    reference = problem.deformation_points
    _, node = cKDTree(reference).query(np.asarray(target, dtype=float))
    return float(config.deformation[node, component - 1] - reference[node, component - 1])


def ring_height(config: Configuration, problem: ShellProblem, selector: Selector) -> float:
    """Mean x3 over the deformation nodes whose reference position the selector picks."""
    picked = selector.evaluate(problem.deformation_points)
    if not picked.any():
        raise EmptySelection(f"selector {selector.dump()} matches no deformation node")
    return float(config.deformation[picked, 2].mean())


def probe(config: Configuration, problem: ShellProblem, spec: ProbeSpec) -> float:
    if spec.kind == "point_deflection":
        return point_deflection(config, problem, spec.target, spec.component)
    if spec.kind == "ring_height":
        return ring_height(config, problem, spec.selector)
    raise ValueError(f"unknown probe kind '{spec.kind}'")


def probe_values(config: Configuration, problem: ShellProblem, specs: Iterable[ProbeSpec]) -> Dict[str, float]:
    return {spec.name: probe(config, problem, spec) for spec in specs}


# reports


def write_report(filename: str, payload: Dict[str, Any]) -> None:
    try:
        with open(filename, "w", encoding="utf-8") as handle:
            yaml.safe_dump(payload, handle, sort_keys=False)
    except OSError as exc:
        raise IoError(f"cannot write report '{filename}': {exc}") from exc


def write_history(filename: str, frames: List[pd.DataFrame]) -> pd.DataFrame:
    history = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    try:
        history.to_csv(filename, index=False)
    except OSError as exc:
        raise IoError(f"cannot write history '{filename}': {exc}") from exc
    return history
