from __future__ import annotations

import logging
import os
from typing import Iterator, List, Tuple

import meshio
import numpy as np

from .errors import DegenerateImmersion, IoError, ParseError
from .geometry import FEGeometry
from .mesh import ParamMesh
from .quadrature import quadrature_rule


logger = logging.getLogger(__name__)

MESH_HEADER = "cosserat-mesh"
MESH_VERSION = "v1"
IMMERSION_FLOOR = 1e-10

# meshio numbers triangle6 midpoints by edges (0,1), (1,2), (2,0)
_FROM_MESHIO_TRIANGLE6 = [0, 1, 2, 4, 5, 3]


def _content_lines(handle) -> Iterator[Tuple[int, str]]:
    for number, raw in enumerate(handle, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line


def _section(lines: Iterator[Tuple[int, str]], name: str) -> int:
    try:
        number, line = next(lines)
    except StopIteration:
        raise ParseError(f"missing '{name}' section") from None
    parts = line.split()
    if len(parts) != 2 or parts[0] != name:
        raise ParseError(f"expected '{name} <count>', got '{line}'", line=number)
    try:
        count = int(parts[1])
    except ValueError:
        raise ParseError(f"'{parts[1]}' is not a count", line=number) from None
    if count < 0:
        raise ParseError(f"negative {name} count", line=number)
    return count


def _read_text_mesh(handle) -> ParamMesh:
    lines = _content_lines(handle)
    try:
        number, header = next(lines)
    except StopIteration:
        raise ParseError("mesh file is empty") from None
    parts = header.split()
    if len(parts) != 3 or parts[0] != MESH_HEADER or parts[1] != MESH_VERSION or parts[2] not in ("1", "2"):
        raise ParseError(f"expected header '{MESH_HEADER} {MESH_VERSION} <1|2>', got '{header}'", line=number)
    order = int(parts[2])

    n_nodes = _section(lines, "nodes")
    positions = np.full((n_nodes, 3), np.nan)
    for _ in range(n_nodes):
        number, line = _next(lines, "node")
        fields = line.split()
        if len(fields) != 4:
            raise ParseError(f"node line needs '<id> <x> <y> <z>', got '{line}'", line=number)
        node = _parse_id(fields[0], n_nodes, number)
        try:
            positions[node] = [float(v) for v in fields[1:]]
        except ValueError:
            raise ParseError(f"non-numeric coordinate in '{line}'", line=number) from None
        if not np.all(np.isfinite(positions[node])):
            raise ParseError(f"non-finite coordinate in '{line}'", line=number)
    if np.isnan(positions).any():
        missing = int(np.flatnonzero(np.isnan(positions[:, 0]))[0])
        raise ParseError(f"node {missing} is never defined")

    n_triangles = _section(lines, "triangles")
    per_triangle = 3 * order
    triangles: List[List[int]] = []
    for _ in range(n_triangles):
        number, line = _next(lines, "triangle")
        fields = line.split()
        if len(fields) != per_triangle:
            raise ParseError(f"triangle line needs {per_triangle} node ids, got {len(fields)}", line=number)
        triangles.append([_parse_id(f, n_nodes, number) for f in fields])

    leftover = next(lines, None)
    if leftover is not None:
        raise ParseError(f"unexpected content '{leftover[1]}'", line=leftover[0])
    return ParamMesh(positions=positions, triangles=np.asarray(triangles, dtype=np.int64).reshape(-1, per_triangle), geometry_order=order)


def _next(lines: Iterator[Tuple[int, str]], what: str) -> Tuple[int, str]:
    try:
        return next(lines)
    except StopIteration:
        raise ParseError(f"file ends before the last {what}") from None


def _parse_id(field: str, count: int, number: int) -> int:
    try:
        value = int(field)
    except ValueError:
        raise ParseError(f"'{field}' is not a node id", line=number) from None
    if not 0 <= value < count:
        raise ParseError(f"node id {value} outside 0..{count - 1}", line=number)
    return value


def _read_external_mesh(path: str) -> ParamMesh:
    try:
        data = meshio.read(path)
    except Exception as exc:
        raise ParseError(f"meshio cannot read '{path}': {exc}") from exc
    cells = data.cells_dict
    if "triangle6" in cells:
        triangles, order = np.asarray(cells["triangle6"])[:, _FROM_MESHIO_TRIANGLE6], 2
    elif "triangle" in cells:
        triangles, order = np.asarray(cells["triangle"]), 1
    else:
        raise ParseError(f"'{path}' holds no triangle or triangle6 cells")
    points = np.asarray(data.points, dtype=float)
    if points.shape[1] == 2:
        points = np.column_stack([points, np.zeros(points.shape[0])])
    used, dense = np.unique(triangles, return_inverse=True)
    logger.debug("imported %d triangles from %s, dropped %d unused points", triangles.shape[0], path, points.shape[0] - used.size)
    return ParamMesh(positions=points[used], triangles=dense.reshape(triangles.shape), geometry_order=order)


def immersion_floor(mesh: ParamMesh) -> Tuple[float, int]:
    """Smallest area element over the quadrature points and the triangle where it occurs."""
    rule = quadrature_rule(2 * mesh.geometry_order + 1)
    _, jac, _ = FEGeometry(mesh).evaluate_grid(mesh.n_triangles, rule.points)
    area = np.linalg.norm(np.cross(jac[..., 0], jac[..., 1]), axis=-1).min(axis=1)
    worst = int(np.argmin(area))
    return float(area[worst]), worst


def validate_mesh(mesh: ParamMesh, floor: float = IMMERSION_FLOOR) -> ParamMesh:
    mesh.edge_table()
    if mesh.n_triangles == 0:
        raise ParseError("mesh has no triangles")
    area, worst = immersion_floor(mesh)
    if not area >= floor:
        raise DegenerateImmersion(f"area element {area:.3g} below {floor:g}", triangle=worst)
    return mesh


def load_mesh(path: str) -> ParamMesh:
    if not os.path.isfile(path):
        raise IoError(f"mesh file '{path}' not found")
    with open(path, "rb") as handle:
        head = handle.read(len(MESH_HEADER))
    if head == MESH_HEADER.encode("ascii"):
        with open(path, "r", encoding="utf-8") as handle:
            mesh = _read_text_mesh(handle)
    else:
        mesh = _read_external_mesh(path)
    return validate_mesh(mesh)


def save_mesh(mesh: ParamMesh, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(f"{MESH_HEADER} {MESH_VERSION} {mesh.geometry_order}\n")
            handle.write(f"nodes {mesh.n_nodes}\n")
            for node, (x, y, z) in enumerate(mesh.positions):
                handle.write(f"{node} {float(x)!r} {float(y)!r} {float(z)!r}\n")
            handle.write(f"triangles {mesh.n_triangles}\n")
            for row in mesh.triangles:
                handle.write(" ".join(str(int(v)) for v in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write mesh to '{path}': {exc}") from exc
