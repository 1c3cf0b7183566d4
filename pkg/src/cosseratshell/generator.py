"""
Preset shell geometries.

Every preset is a structured triangulation of a parameter domain together with
its closed-form reference immersion. Grid presets label points by doubled
integer indices so edge midpoints get integer labels too; gluings are applied by
mapping each label to a canonical representative before node ids are handed out.
Nodal positions interpolate the immersion, so the FE geometry of order 2 agrees
with the closed form at every node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, Hashable, List, Sequence, Tuple

import jax.numpy as jnp
import numpy as np

from .errors import InvalidResolution, UnsupportedOrder
from .geometry import AnalyticGeometry
from .mesh import EDGE_VERTICES, ParamMesh


PRESETS = ("half_sphere", "cylinder", "moebius", "klein_bottle", "flat_plate")

DEFAULT_RESOLUTIONS: Dict[str, Tuple[int, ...]] = {
    "half_sphere": (0,),
    "cylinder": (24, 48),
    "moebius": (23, 120),
    "klein_bottle": (24, 32),
    "flat_plate": (1, 1),
}

# (reference geometry, deformation, microrotation) orders of the hemisphere study
HALF_SPHERE_SCENARIOS: Tuple[Tuple[int, int, int], ...] = (
    (1, 1, 1),
    (1, 2, 1),
    (1, 2, 2),
    (2, 1, 1),
    (2, 2, 1),
    (2, 2, 2),
)

CYLINDER_RADIUS = 10.0
CYLINDER_HEIGHT = 15.0
MOEBIUS_RADIUS = 3.0
MOEBIUS_WIDTH = 4.5
KLEIN_R = 1.5
KLEIN_T = 5.0


@dataclass(frozen=True, eq=False)
class PresetMesh:
    name: str
    mesh: ParamMesh
    analytic: AnalyticGeometry
    resolution: Tuple[int, ...]


# closed-form immersions (jax-traceable)


def sphere_immersion(p):
    return p / jnp.linalg.norm(p)


def cylinder_immersion(p):
    theta, z = p[0], p[1]
    return jnp.array([CYLINDER_RADIUS * jnp.cos(theta), CYLINDER_RADIUS * jnp.sin(theta), z])


def moebius_immersion(p):
    u, v = p[0], p[1]
    radial = MOEBIUS_RADIUS + u * jnp.cos(0.5 * v)
    return jnp.array([radial * jnp.cos(v), radial * jnp.sin(v), u * jnp.sin(0.5 * v)])


def klein_immersion(p):
    u, v = p[0], p[1]
    tube = 2.0 - jnp.cos(u)
    return jnp.array(
        [
            KLEIN_R * (1.0 - jnp.sin(u)) * jnp.cos(u) + tube * jnp.cos(v) * (2.0 * jnp.exp(-((0.5 * u - jnp.pi) ** 2)) - 1.0),
            tube * jnp.sin(v),
            KLEIN_T + KLEIN_T * jnp.sin(u) + 0.5 * tube * jnp.sin(u) * jnp.cos(v) * jnp.exp(-((u - 1.5 * jnp.pi) ** 2)),
        ]
    )


def plate_immersion(p):
    return jnp.array([p[0], p[1], 0.0])


# shared construction


def _connectivity(node_keys: Sequence[Sequence[Hashable]]) -> Tuple[np.ndarray, List[Hashable]]:
    ids: Dict[Hashable, int] = {}
    triangles = np.zeros((len(node_keys), len(node_keys[0])), dtype=np.int64)
    for t, keys in enumerate(node_keys):
        for k, key in enumerate(keys):
            triangles[t, k] = ids.setdefault(key, len(ids))
    return triangles, list(ids)


def _with_midpoints(corners: Sequence, midpoint: Callable) -> List:
    return list(corners) + [midpoint(corners[i], corners[j]) for i, j in EDGE_VERTICES]


def _check_order(order: int) -> None:
    if order not in (1, 2):
        raise UnsupportedOrder(f"geometry order {order} not supported (1 or 2)")


def _grid_preset(
    name: str,
    resolution: Tuple[int, int],
    u_range: Tuple[float, float],
    v_range: Tuple[float, float],
    immersion: Callable,
    canonical: Callable[[int, int], Tuple[int, int]],
    order: int,
) -> PresetMesh:
    n_u, n_v = resolution
    (u0, u1), (v0, v1) = u_range, v_range

    def parameter(label):
        return (u0 + (u1 - u0) * label[0] / (2 * n_u), v0 + (v1 - v0) * label[1] / (2 * n_v))

    def midpoint(a, b):
        return ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)

    labels: List[List[Tuple[int, int]]] = []
    for i in range(n_u):
        for j in range(n_v):
            a, b, c, d = (2 * i, 2 * j), (2 * i + 2, 2 * j), (2 * i + 2, 2 * j + 2), (2 * i, 2 * j + 2)
            for tri in ((a, b, c), (a, c, d)):
                labels.append(_with_midpoints(tri, midpoint) if order == 2 else list(tri))

    triangles, keys = _connectivity([[canonical(*label) for label in tri] for tri in labels])
    params = np.array([parameter(key) for key in keys], dtype=float)
    analytic_corners = np.array([[parameter(label) for label in tri[:3]] for tri in labels], dtype=float)
    analytic = AnalyticGeometry(immersion, analytic_corners)
    mesh = ParamMesh(positions=analytic.at_parameters(params), triangles=triangles, geometry_order=order)
    return PresetMesh(name=name, mesh=mesh, analytic=analytic, resolution=(n_u, n_v))


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidResolution(message)


def _pair(name: str, resolution: Sequence[int]) -> Tuple[int, int]:
    values = tuple(int(r) for r in resolution)
    _require(len(values) == 2, f"{name} needs two resolution counts, got {list(resolution)}")
    _require(all(v >= 1 for v in values), f"{name} resolution counts must be positive, got {list(values)}")
    return values[0], values[1]


def flat_plate(resolution: Sequence[int] = (1, 1), order: int = 1, size: Tuple[float, float] = (1.0, 1.0)) -> PresetMesh:
    n_x, n_y = _pair("flat_plate", resolution)
    return _grid_preset("flat_plate", (n_x, n_y), (0.0, size[0]), (0.0, size[1]), plate_immersion, lambda i, j: (i, j), order)


def cylinder(resolution: Sequence[int] = DEFAULT_RESOLUTIONS["cylinder"], order: int = 2) -> PresetMesh:
    """Radius 10, height 15 around the x3 axis; resolution is (n_height, n_around)."""
    n_height, n_around = _pair("cylinder", resolution)
    _require(n_around >= 3, f"cylinder needs at least 3 cells around, got {n_around}")
    period = 2 * n_around

    def canonical(i, j):
        return (i % period, j)

    # parameters are (theta, z) so the normal points outward
    preset = _grid_preset(
        "cylinder", (n_around, n_height), (0.0, 2.0 * math.pi), (0.0, CYLINDER_HEIGHT), cylinder_immersion, canonical, order
    )
    return replace(preset, resolution=(n_height, n_around))


def moebius(resolution: Sequence[int] = DEFAULT_RESOLUTIONS["moebius"], order: int = 2) -> PresetMesh:
    """Resolution (n_u, n_v): n_u cells across the width, n_v around; (u, 2pi) is glued to (-u, 0)."""
    n_u, n_v = _pair("moebius", resolution)
    _require(n_v >= 3, f"moebius needs at least 3 cells around, got {n_v}")

    def canonical(i, j):
        if j == 2 * n_v:
            return (2 * n_u - i, 0)
        return (i, j)

    half = 0.5 * MOEBIUS_WIDTH
    return _grid_preset("moebius", (n_u, n_v), (-half, half), (0.0, 2.0 * math.pi), moebius_immersion, canonical, order)


def klein_bottle(resolution: Sequence[int] = DEFAULT_RESOLUTIONS["klein_bottle"], order: int = 2) -> PresetMesh:
    """Resolution (n_u, n_v); v is periodic and the tube ends are glued by (0, v) ~ (2pi, pi - v)."""
    n_u, n_v = _pair("klein_bottle", resolution)
    _require(n_u >= 3 and n_v >= 3, f"klein_bottle needs at least 3 cells per direction, got {[n_u, n_v]}")
    _require(n_v % 2 == 0, f"klein_bottle needs an even n_v, got {n_v}")
    period = 2 * n_v

    def canonical(i, j):
        j = j % period
        if i == 2 * n_u:
            return (0, (n_v - j) % period)
        return (i, j)

    return _grid_preset(
        "klein_bottle", (n_u, n_v), (0.0, 2.0 * math.pi), (0.0, 2.0 * math.pi), klein_immersion, canonical, order
    )


def _octahedron_cap() -> List[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    e1, e2, e3 = np.eye(3)
    faces = [(e1, e2, e3), (e2, -e1, e3), (-e1, -e2, e3), (-e2, e1, e3)]
    triangles = []
    for a, b, c in faces:
        g = (a + b + c) / 3.0
        mab, mbc, mca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        triangles += [(a, mab, g), (mab, b, g), (b, mbc, g), (mbc, c, g), (c, mca, g), (mca, a, g)]
    return triangles


def _red_refine(triangles):
    refined = []
    for a, b, c in triangles:
        mab, mbc, mca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        refined += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
    return refined


def half_sphere(resolution: Sequence[int] = DEFAULT_RESOLUTIONS["half_sphere"], order: int = 2) -> PresetMesh:
    """Unit upper hemisphere with 24 * 4**level triangles; resolution is (level,)."""
    values = tuple(int(r) for r in resolution)
    _require(len(values) == 1 and values[0] >= 0, f"half_sphere needs one non-negative refinement level, got {list(resolution)}")
    level = values[0]
    flat = _octahedron_cap()
    for _ in range(level):
        flat = _red_refine(flat)

    oriented = []
    for a, b, c in flat:
        if np.dot(np.cross(b - a, c - a), a + b + c) < 0.0:
            b, c = c, b
        oriented.append((a, b, c))

    def key(point):
        return tuple(np.round(point, 12) + 0.0)

    def midpoint(p, q):
        return 0.5 * (p + q)

    points = [_with_midpoints(tri, midpoint) if order == 2 else list(tri) for tri in oriented]
    triangles, keys = _connectivity([[key(p) for p in tri] for tri in points])
    flat_nodes = np.array(keys, dtype=float)
    analytic = AnalyticGeometry(sphere_immersion, np.array([[p for p in tri] for tri in oriented], dtype=float))
    mesh = ParamMesh(positions=analytic.at_parameters(flat_nodes), triangles=triangles, geometry_order=order)
    return PresetMesh(name="half_sphere", mesh=mesh, analytic=analytic, resolution=(level,))


_BUILDERS = {
    "half_sphere": half_sphere,
    "cylinder": cylinder,
    "moebius": moebius,
    "klein_bottle": klein_bottle,
    "flat_plate": flat_plate,
}


def generate_preset(name: str, resolution: Sequence[int] = (), order: int = 2) -> PresetMesh:
    if name not in _BUILDERS:
        raise ValueError(f"unknown preset '{name}' (expected one of {', '.join(PRESETS)})")
    _check_order(order)
    resolution = tuple(resolution) or DEFAULT_RESOLUTIONS[name]
    return _BUILDERS[name](resolution, order=order)
