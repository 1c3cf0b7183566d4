from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import jax
import jax.numpy as jnp
import numpy as np

from .errors import NonManifoldEdge, UnsupportedOrder


# local edge k is opposite local vertex k and runs from vertex (k+1)%3 to (k+2)%3
EDGE_VERTICES = ((1, 2), (2, 0), (0, 1))
REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class ParamMesh:
    positions: np.ndarray  # (N, 3) m0 at topological nodes
    triangles: np.ndarray  # (M, 3) or (M, 6), corners then edge midpoints
    geometry_order: int = 1

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float).reshape(-1, 3)
        triangles = np.array(self.triangles, dtype=np.int64)
        if triangles.ndim != 2 or triangles.shape[1] != 3 * self.geometry_order:
            raise ValueError(f"geometry order {self.geometry_order} needs {3 * self.geometry_order} nodes per triangle")
        positions.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "triangles", triangles)

    @property
    def n_nodes(self) -> int:
        return int(self.positions.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def corners(self) -> np.ndarray:
        return self.triangles[:, :3]

    def edge_table(self) -> "EdgeTable":
        return _edge_table(self)

    def boundary_edges(self) -> List[Tuple[int, int]]:
        """(triangle, local edge) pairs of edges that belong to a single triangle."""
        table = self.edge_table()
        result: List[Tuple[int, int]] = []
        for t in range(self.n_triangles):
            for k in range(3):
                if table.counts[table.ids[t, k]] == 1:
                    result.append((t, k))
        return result


@dataclass(frozen=True, eq=False)
class EdgeTable:
    ids: np.ndarray  # (M, 3) global edge id of each local edge
    vertices: np.ndarray  # (E, 2) sorted corner node ids
    counts: np.ndarray  # (E,) incident triangle count

    @property
    def n_edges(self) -> int:
        return int(self.vertices.shape[0])


def _edge_key(mesh: ParamMesh, t: int, k: int):
    i, j = EDGE_VERTICES[k]
    a, b = int(mesh.triangles[t, i]), int(mesh.triangles[t, j])
    if mesh.geometry_order == 2:
        return int(mesh.triangles[t, 3 + k]), min(a, b), max(a, b)
    return min(a, b), min(a, b), max(a, b)


def _edge_table(mesh: ParamMesh) -> EdgeTable:
    lookup: Dict[Tuple[int, ...], int] = {}
    vertices: List[Tuple[int, int]] = []
    counts: List[int] = []
    ids = np.zeros((mesh.n_triangles, 3), dtype=np.int64)
    for t in range(mesh.n_triangles):
        for k in range(3):
            key = _edge_key(mesh, t, k)
            edge = lookup.get(key)
            if edge is None:
                edge = len(vertices)
                lookup[key] = edge
                vertices.append((key[1], key[2]))
                counts.append(0)
            counts[edge] += 1
            ids[t, k] = edge
    counts_arr = np.asarray(counts, dtype=np.int64)
    bad = np.flatnonzero(counts_arr > 2)
    if bad.size:
        raise NonManifoldEdge(vertices[int(bad[0])], int(counts_arr[bad[0]]))
    return EdgeTable(ids=ids, vertices=np.asarray(vertices, dtype=np.int64).reshape(-1, 2), counts=counts_arr)


# Lagrange shape functions


def local_reference_points(order: int) -> np.ndarray:
    """Reference coordinates of the local Lagrange points: vertices, edge points, interior."""
    if order not in (1, 2, 3):
        raise UnsupportedOrder(f"Lagrange order {order} not supported (1, 2 or 3)")
    points = [tuple(p) for p in REFERENCE_VERTICES]
    for k in range(3):
        i, j = EDGE_VERTICES[k]
        pi, pj = REFERENCE_VERTICES[i], REFERENCE_VERTICES[j]
        for s in range(1, order):
            points.append(tuple(pi + (pj - pi) * s / order))
    if order == 3:
        points.append((1.0 / 3.0, 1.0 / 3.0))
    return np.asarray(points, dtype=float)


def _barycentric(x):
    return jnp.array([1.0 - x[0] - x[1], x[0], x[1]])


def shape_kernel(order: int, x):
    lam = _barycentric(x)
    if order == 1:
        return lam
    if order == 2:
        values = [lam[i] * (2.0 * lam[i] - 1.0) for i in range(3)]
        values += [4.0 * lam[i] * lam[j] for i, j in EDGE_VERTICES]
        return jnp.stack(values)
    if order == 3:
        values = [0.5 * lam[i] * (3.0 * lam[i] - 1.0) * (3.0 * lam[i] - 2.0) for i in range(3)]
        for i, j in EDGE_VERTICES:
            values.append(4.5 * lam[i] * lam[j] * (3.0 * lam[i] - 1.0))
            values.append(4.5 * lam[i] * lam[j] * (3.0 * lam[j] - 1.0))
        values.append(27.0 * lam[0] * lam[1] * lam[2])
        return jnp.stack(values)
    raise UnsupportedOrder(f"Lagrange order {order} not supported (1, 2 or 3)")


@lru_cache(maxsize=None)
def _shape_evaluators(order: int):
    values = jax.jit(jax.vmap(lambda x: shape_kernel(order, x)))
    gradients = jax.jit(jax.vmap(jax.jacfwd(lambda x: shape_kernel(order, x))))
    hessians = jax.jit(jax.vmap(jax.hessian(lambda x: shape_kernel(order, x))))
    return values, gradients, hessians


def shape_functions(order: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Values (..., n) and gradients (..., n, 2) of the order-p Lagrange basis at x (..., 2)."""
    if order not in (1, 2, 3):
        raise UnsupportedOrder(f"Lagrange order {order} not supported (1, 2 or 3)")
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, 2)
    values, gradients, _ = _shape_evaluators(order)
    n = local_reference_points(order).shape[0]
    v = np.asarray(values(jnp.asarray(flat))).reshape(x.shape[:-1] + (n,))
    g = np.asarray(gradients(jnp.asarray(flat))).reshape(x.shape[:-1] + (n, 2))
    return v, g


def shape_hessians(order: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, 2)
    _, _, hessians = _shape_evaluators(order)
    n = local_reference_points(order).shape[0]
    return np.asarray(hessians(jnp.asarray(flat))).reshape(x.shape[:-1] + (n, 2, 2))


# global Lagrange layouts


@dataclass(frozen=True, eq=False)
class LagrangeLayout:
    order: int
    elements: np.ndarray  # (M, n_local) global point ids
    n_points: int
    reference_points: np.ndarray  # (n_local, 2)
    owners: np.ndarray  # (n_points, 2) first (triangle, local index) holding each point

    @property
    def n_local(self) -> int:
        return int(self.elements.shape[1])


def lagrange_points(mesh: ParamMesh, order: int) -> LagrangeLayout:
    """Globally numbered Lagrange points; points on shared or glued edges get one id."""
    reference = local_reference_points(order)
    table = mesh.edge_table()

    vertex_ids: Dict[int, int] = {}
    for node in mesh.corners.ravel():
        vertex_ids.setdefault(int(node), len(vertex_ids))
    n_vertices = len(vertex_ids)
    per_edge = order - 1
    n_edge_points = per_edge * table.n_edges
    n_interior = mesh.n_triangles if order == 3 else 0

    elements = np.zeros((mesh.n_triangles, reference.shape[0]), dtype=np.int64)
    for t in range(mesh.n_triangles):
        corners = [int(n) for n in mesh.triangles[t, :3]]
        elements[t, :3] = [vertex_ids[n] for n in corners]
        col = 3
        for k in range(3):
            i, j = EDGE_VERTICES[k]
            base = n_vertices + per_edge * int(table.ids[t, k])
            for s in range(per_edge):
                # edge points are numbered from the lower corner id to the higher one
                slot = s if corners[i] < corners[j] else per_edge - 1 - s
                elements[t, col] = base + slot
                col += 1
        if order == 3:
            elements[t, col] = n_vertices + n_edge_points + t

    n_points = n_vertices + n_edge_points + n_interior
    owners = np.full((n_points, 2), -1, dtype=np.int64)
    for t in range(mesh.n_triangles):
        for local, point in enumerate(elements[t]):
            if owners[point, 0] < 0:
                owners[point] = (t, local)
    for arr in (elements, owners, reference):
        arr.setflags(write=False)
    return LagrangeLayout(order=order, elements=elements, n_points=n_points, reference_points=reference, owners=owners)


def orientation_flags(mesh: ParamMesh) -> np.ndarray:
    """Per edge: +1 if the two triangles induce consistent orientations, -1 if opposing, 0 on the boundary."""
    table = mesh.edge_table()
    first: Dict[int, Tuple[int, int]] = {}
    flags = np.zeros(table.n_edges, dtype=np.int64)
    for t in range(mesh.n_triangles):
        for k in range(3):
            i, j = EDGE_VERTICES[k]
            direction = (int(mesh.triangles[t, i]), int(mesh.triangles[t, j]))
            edge = int(table.ids[t, k])
            seen: Optional[Tuple[int, int]] = first.get(edge)
            if seen is None:
                first[edge] = direction
            else:
                flags[edge] = 1 if seen == direction[::-1] else -1
    return flags
