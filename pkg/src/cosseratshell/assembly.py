"""
Discrete shell energy over the product of nodal deformations and nodal rotations.

The unknowns are the deformation values at the Lagrange points of order p1 and
the rotation coefficients at the Lagrange points of order p2. Tangent vectors
are stacked as ``[3 * N1 deformation components, 3 * N2 rotation components]``;
a rotation component is the body-frame axial vector v of the perturbation
``R_i -> R_i exp(v)``.

Element energies are written once in jax and evaluated with ``vmap`` over
triangles. Gradients and Hessians are taken with respect to the local tangent
coordinates at zero, which makes them the derivatives of the energy pulled back
through the retraction used by the solver. Global reductions run in fixed
triangle order.
"""

from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from scipy import sparse

from .errors import CoefficientsTooSpread, DegenerateImmersion, EmptySelection, UnknownNode
from .geometry import GeometryProvider
from .gfe import RotationField, interpolation_kernel, spread_triangles
from .mesh import EDGE_VERTICES, REFERENCE_VERTICES, LagrangeLayout, ParamMesh, lagrange_points, shape_functions
from .models import DirichletSpec, LoadSpec, MaterialParams
from .quadrature import line_rule, quadrature_rule
from .shellmodel import (
    AREA_FLOOR,
    StrainState,
    SurfaceGeometry,
    bending_density,
    geometry_table,
    membrane_density,
    reconstruct as reconstruct_point,
    surface_geometry,
)
from .so3 import Rotation, as_matrix, axl_kernel, exp_kernel, exp_map


logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 512
_GEOMETRY_KEYS = ("a_up", "a", "b", "c", "K", "H", "n", "dA")


def default_quadrature_order(deformation_order: int, rotation_order: int, geometry_order: int) -> int:
    return 2 * max(deformation_order, rotation_order, geometry_order) + 1


@dataclass(frozen=True, eq=False)
class Configuration:
    deformation_layout: LagrangeLayout
    deformation: np.ndarray  # (N1, 3)
    rotation: RotationField

    def __post_init__(self):
        values = np.array(self.deformation, dtype=float).reshape(-1, 3)
        if values.shape[0] != self.deformation_layout.n_points:
            raise ValueError(f"deformation needs {self.deformation_layout.n_points} values, got {values.shape[0]}")
        values.setflags(write=False)
        object.__setattr__(self, "deformation", values)

    @property
    def rotations(self) -> np.ndarray:
        return self.rotation.values

    def with_values(self, deformation: Optional[np.ndarray] = None, rotations: Optional[np.ndarray] = None) -> "Configuration":
        return Configuration(
            self.deformation_layout,
            self.deformation if deformation is None else deformation,
            self.rotation if rotations is None else self.rotation.with_values(rotations),
        )

    def rigidly_moved(self, rotation, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "Configuration":
        R = as_matrix(rotation)
        return self.with_values(self.deformation @ R.T + np.asarray(translation, dtype=float), np.einsum("ij,njk->nik", R, self.rotations))


@dataclass(frozen=True, eq=False)
class TangentVector:
    deformation: np.ndarray  # (N1, 3)
    rotation: np.ndarray  # (N2, 3) body-frame axial vectors

    @classmethod
    def zeros(cls, n_deformation: int, n_rotation: int) -> "TangentVector":
        return cls(np.zeros((n_deformation, 3)), np.zeros((n_rotation, 3)))

    @classmethod
    def from_flat(cls, vector: np.ndarray, n_deformation: int) -> "TangentVector":
        vector = np.asarray(vector, dtype=float)
        split = 3 * n_deformation
        return cls(vector[:split].reshape(-1, 3).copy(), vector[split:].reshape(-1, 3).copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.deformation), np.ravel(self.rotation)])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def dot(self, other: "TangentVector") -> float:
        return float(np.dot(self.flat(), other.flat()))


@dataclass(frozen=True, eq=False)
class BoundaryConditions:
    deformation_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    deformation_mask: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=bool))
    deformation_targets: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    rotation_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    rotation_targets: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, 3)))

    def __post_init__(self):
        object.__setattr__(self, "deformation_nodes", np.asarray(self.deformation_nodes, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "deformation_mask", np.asarray(self.deformation_mask, dtype=bool).reshape(-1, 3))
        object.__setattr__(self, "deformation_targets", np.asarray(self.deformation_targets, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "rotation_nodes", np.asarray(self.rotation_nodes, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "rotation_targets", np.asarray(self.rotation_targets, dtype=float).reshape(-1, 3, 3))
        if not (len(self.deformation_nodes) == len(self.deformation_mask) == len(self.deformation_targets)):
            raise ValueError("deformation nodes, masks and targets differ in length")
        if len(self.rotation_nodes) != len(self.rotation_targets):
            raise ValueError("rotation nodes and targets differ in length")

    @property
    def is_empty(self) -> bool:
        return not len(self.deformation_nodes) and not len(self.rotation_nodes)

    def rotated(self, rotation) -> "BoundaryConditions":
        """Targets moved by a rigid rotation about the origin."""
        R = as_matrix(rotation)
        return replace(
            self,
            deformation_targets=self.deformation_targets @ R.T,
            rotation_targets=np.einsum("ij,njk->nik", R, self.rotation_targets),
        )

    @classmethod
    def from_specs(
        cls,
        specs: Sequence[DirichletSpec],
        deformation_points: np.ndarray,
        rotation_points: np.ndarray,
        parameter: float = 0.0,
    ) -> "BoundaryConditions":
        """Resolve selector-based specs against m0 at the Lagrange points; later specs override earlier ones."""
        deformation: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        rotation: Dict[int, np.ndarray] = {}
        for spec in specs:
            mask = spec.selector.evaluate(deformation_points)
            if not mask.any():
                raise EmptySelection(f"boundary condition selector {spec.selector.dump()} matches no deformation node")
            target_rotation, move = _motion(spec, parameter)
            components = np.asarray(spec.components, dtype=bool)
            for node in np.flatnonzero(mask):
                old_mask, old_target = deformation.get(int(node), (np.zeros(3, dtype=bool), np.zeros(3)))
                target = np.where(components, move(deformation_points[node]), old_target)
                deformation[int(node)] = (old_mask | components, target)
            if spec.rotation:
                selected = np.flatnonzero(spec.selector.evaluate(rotation_points))
                if not selected.size:
                    raise EmptySelection(f"boundary condition selector {spec.selector.dump()} matches no rotation node")
                for node in selected:
                    rotation[int(node)] = target_rotation
        nodes = sorted(deformation)
        rnodes = sorted(rotation)
        return cls(
            deformation_nodes=np.array(nodes, dtype=np.int64),
            deformation_mask=np.array([deformation[n][0] for n in nodes], dtype=bool).reshape(-1, 3),
            deformation_targets=np.array([deformation[n][1] for n in nodes], dtype=float).reshape(-1, 3),
            rotation_nodes=np.array(rnodes, dtype=np.int64),
            rotation_targets=np.array([rotation[n] for n in rnodes], dtype=float).reshape(-1, 3, 3),
        )


def _motion(spec: DirichletSpec, parameter: float):
    if spec.motion == "fixed":
        return np.eye(3), lambda x: np.array(x, dtype=float)
    axis = np.asarray(spec.axis, dtype=float)
    if spec.motion == "translate":
        return np.eye(3), lambda x: np.asarray(x, dtype=float) + parameter * axis
    if spec.motion == "rotate":
        norm = np.linalg.norm(axis)
        if norm == 0.0:
            raise ValueError("rotation axis must not vanish")
        R = exp_map(parameter * axis / norm).matrix
        center = np.asarray(spec.center, dtype=float)
        return R, lambda x: center + R @ (np.asarray(x, dtype=float) - center)
    raise ValueError(f"unknown boundary motion '{spec.motion}'")


def apply_dirichlet(bc: BoundaryConditions, config: Configuration) -> Configuration:
    _check_nodes(bc, config.deformation.shape[0], config.rotations.shape[0])
    deformation = np.array(config.deformation)
    rows = deformation[bc.deformation_nodes]
    deformation[bc.deformation_nodes] = np.where(bc.deformation_mask, bc.deformation_targets, rows)
    rotations = np.array(config.rotations)
    rotations[bc.rotation_nodes] = bc.rotation_targets
    return config.with_values(deformation, rotations)


def mask(bc: BoundaryConditions, v: TangentVector) -> TangentVector:
    _check_nodes(bc, v.deformation.shape[0], v.rotation.shape[0])
    deformation = np.array(v.deformation)
    deformation[bc.deformation_nodes] = np.where(bc.deformation_mask, 0.0, deformation[bc.deformation_nodes])
    rotation = np.array(v.rotation)
    rotation[bc.rotation_nodes] = 0.0
    return TangentVector(deformation, rotation)


def _check_nodes(bc: BoundaryConditions, n_deformation: int, n_rotation: int) -> None:
    for nodes, count, what in ((bc.deformation_nodes, n_deformation, "deformation"), (bc.rotation_nodes, n_rotation, "rotation")):
        if nodes.size and (nodes.min() < 0 or nodes.max() >= count):
            bad = int(nodes[(nodes < 0) | (nodes >= count)][0])
            raise UnknownNode(f"{what} node {bad} outside 0..{count - 1}")


# element kernels


def _point_state(kernel, m_loc, C, lam1, dlam1, lam2, dlam2, a_up, a):
    def value(w):
        Q = kernel(C, w)
        return Q, Q

    dQ_dw, Q = jax.jacfwd(value, has_aux=True)(lam2)
    dQ = dQ_dw @ dlam2  # (3, 3, 2)
    position = m_loc.T @ lam1
    E = Q.T @ (m_loc.T @ dlam1) @ a_up - a
    k = jnp.stack([axl_kernel(Q.T @ dQ[:, :, 0]), axl_kernel(Q.T @ dQ[:, :, 1])], axis=1)
    return position, Q, E, k @ a_up


def _element_energy_fn(kind: str, variant: str, mat: MaterialParams):
    kernel = interpolation_kernel(kind)

    def at_point(m_loc, C, lam1, dlam1, lam2, dlam2, geo):
        _, _, E, Ke = _point_state(kernel, m_loc, C, lam1, dlam1, lam2, dlam2, geo["a_up"], geo["a"])
        density = membrane_density(E, Ke, geo["b"], geo["c"], geo["K"], geo["H"], geo["n"], mat, variant)
        return geo["dA"] * (density + bending_density(Ke, geo["b"], geo["K"], mat))

    def element(m_loc, C, v, shapes, geo):
        C_eff = jax.vmap(lambda Ci, vi: Ci @ exp_kernel(vi))(C, v)
        per_point = jax.vmap(at_point, in_axes=(None, None, 0, 0, 0, 0, 0))(
            m_loc, C_eff, shapes["lam1"], shapes["dlam1"], shapes["lam2"], shapes["dlam2"], geo
        )
        return jnp.sum(per_point)

    return element


class ShellProblem:
    """Everything the energy depends on except the unknowns, precomputed at the quadrature points."""

    def __init__(
        self,
        mesh: ParamMesh,
        provider: GeometryProvider,
        material: MaterialParams,
        deformation_order: int = 2,
        rotation_order: int = 1,
        interpolation: str = "geodesic",
        variant: str = "main",
        quadrature_order: Optional[int] = None,
        loads: LoadSpec = LoadSpec(),
        boundary_conditions: Optional[BoundaryConditions] = None,
        chunk_size: int = DEFAULT_CHUNK,
    ):
        if variant not in ("main", "birsan"):
            raise ValueError(f"unknown energy variant '{variant}'")
        self.mesh = mesh
        self.provider = provider
        self.material = material
        self.interpolation = interpolation
        self.variant = variant
        self.chunk_size = int(chunk_size)
        self.deformation_layout = lagrange_points(mesh, deformation_order)
        self.rotation_layout = lagrange_points(mesh, rotation_order)
        order = quadrature_order or default_quadrature_order(deformation_order, rotation_order, mesh.geometry_order)
        self.rule = quadrature_rule(order)
        self._kernel = interpolation_kernel(interpolation)

        lam1, dlam1 = shape_functions(deformation_order, self.rule.points)
        lam2, dlam2 = shape_functions(rotation_order, self.rule.points)
        self._lam2 = lam2
        self._shapes = {k: jnp.asarray(v) for k, v in (("lam1", lam1), ("dlam1", dlam1), ("lam2", lam2), ("dlam2", dlam2))}

        positions, jac, sec = provider.evaluate_grid(mesh.n_triangles, self.rule.points)
        table = geometry_table(jac, sec)
        area = table["area"]
        if not area.min() >= AREA_FLOOR:
            worst = int(np.argmin(area.min(axis=1)))
            raise DegenerateImmersion(f"area element {area.min():.3g} below {AREA_FLOOR:g}", triangle=worst)
        self.quadrature_positions = positions
        self.quadrature_weights = self.rule.weights[None, :] * area  # (M, Q)
        self._geometry = {
            "a_up": table["contravariant"],
            "a": table["a"],
            "b": table["b"],
            "c": table["c"],
            "K": table["K"],
            "H": table["H"],
            "n": table["normal"],
            "dA": self.quadrature_weights,
        }
        self.max_thickness_curvature = float(material.thickness * np.max(np.abs(table["principal"])))
        self.min_area_element = float(area.min())
        self._geometry_chunks = self._split_geometry()

        self.deformation_points = self._reference_points(self.deformation_layout)
        self.rotation_points = self._reference_points(self.rotation_layout)
        self._dofs = self._element_dofs()

        element = _element_energy_fn(interpolation, variant, material)
        n1, n2 = self.deformation_layout.n_local, self.rotation_layout.n_local

        def flat_energy(z, C, shapes, geo):
            return element(z[: 3 * n1].reshape(n1, 3), C, z[3 * n1 :].reshape(n2, 3), shapes, geo)

        batch = (0, 0, None, 0)
        self._energy_batch = jax.jit(jax.vmap(flat_energy, in_axes=batch))
        self._gradient_batch = jax.jit(jax.vmap(jax.grad(flat_energy), in_axes=batch))
        self._hessian_batch = jax.jit(jax.vmap(jax.hessian(flat_energy), in_axes=batch))
        self._sample_batch = jax.jit(
            jax.vmap(lambda m, C, l1, d1, l2, d2, a_up, a: _point_state(self._kernel, m, C, l1, d1, l2, d2, a_up, a))
        )

        self._checked = None
        self.loads = loads
        self.boundary_conditions = boundary_conditions or BoundaryConditions()
        self.load_vector = self._load_vector(loads)

    # derived problems sharing the compiled kernels

    def with_loads(self, loads: LoadSpec) -> "ShellProblem":
        other = copy.copy(self)
        other.loads = loads
        other.load_vector = self._load_vector(loads)
        return other

    def with_boundary_conditions(self, bcs: BoundaryConditions) -> "ShellProblem":
        _check_nodes(bcs, self.n_deformation, self.n_rotation)
        other = copy.copy(self)
        other.boundary_conditions = bcs
        return other

    def boundary_conditions_from(self, specs: Sequence[DirichletSpec], parameter: float = 0.0) -> BoundaryConditions:
        return BoundaryConditions.from_specs(specs, self.deformation_points, self.rotation_points, parameter)

    # sizes and layout

    @property
    def n_deformation(self) -> int:
        return self.deformation_layout.n_points

    @property
    def n_rotation(self) -> int:
        return self.rotation_layout.n_points

    @property
    def n_dofs(self) -> int:
        return 3 * (self.n_deformation + self.n_rotation)

    @property
    def total_area(self) -> float:
        return float(self.quadrature_weights.sum())

    def _reference_points(self, layout: LagrangeLayout) -> np.ndarray:
        owners = layout.owners
        pos, _, _ = self.provider.evaluate(owners[:, 0], layout.reference_points[owners[:, 1]])
        return pos

    def _element_dofs(self) -> np.ndarray:
        comps = np.arange(3)
        deformation = (3 * self.deformation_layout.elements[:, :, None] + comps).reshape(self.mesh.n_triangles, -1)
        rotation = (3 * self.n_deformation + 3 * self.rotation_layout.elements[:, :, None] + comps).reshape(self.mesh.n_triangles, -1)
        return np.concatenate([deformation, rotation], axis=1)

    def free_mask(self) -> np.ndarray:
        bc = self.boundary_conditions
        free = np.ones((self.n_deformation + self.n_rotation, 3), dtype=bool)
        free[bc.deformation_nodes] &= ~bc.deformation_mask
        free[self.n_deformation + bc.rotation_nodes] = False
        return free.ravel()

    # configurations

    def reference_configuration(self) -> Configuration:
        return Configuration(
            self.deformation_layout,
            self.deformation_points,
            RotationField.identity(self.rotation_layout, self.interpolation),
        )

    def initial_configuration(self) -> Configuration:
        return apply_dirichlet(self.boundary_conditions, self.reference_configuration())

    # loads

    def _load_vector(self, loads: LoadSpec) -> np.ndarray:
        F = np.zeros((self.n_deformation, 3))
        if loads.is_empty:
            return F
        elements = self.deformation_layout.elements
        lam1 = np.asarray(self._shapes["lam1"])
        if loads.volume:
            density = loads.density(self.quadrature_positions.reshape(-1, 3), self.material.thickness).reshape(
                self.mesh.n_triangles, -1, 3
            )
            contributions = np.einsum("mq,qi,mqd->mid", self.quadrature_weights, lam1, density)
            np.add.at(F, elements, contributions)
        if loads.traction:
            s, w = line_rule(2 * max(self.deformation_layout.order, self.mesh.geometry_order) + 1)
            for t, k in self.mesh.boundary_edges():
                i, j = EDGE_VERTICES[k]
                start, direction = REFERENCE_VERTICES[i], REFERENCE_VERTICES[j] - REFERENCE_VERTICES[i]
                points = start + s[:, None] * direction
                pos, jac, _ = self.provider.evaluate(np.full(len(s), t), points)
                ds = w * np.linalg.norm(jac @ direction, axis=-1)
                values, _ = shape_functions(self.deformation_layout.order, points)
                density = loads.traction_density(pos)
                np.add.at(F, elements[t], np.einsum("q,qi,qd->id", ds, values, density))
        return F

    def external_potential(self, config: Configuration) -> float:
        return float(np.sum(self.load_vector * (config.deformation - self.deformation_points)))

    # evaluation

    def _local(self, config: Configuration):
        return (
            config.deformation[self.deformation_layout.elements],
            config.rotations[self.rotation_layout.elements],
        )

    def check_configuration(self, config: Configuration) -> None:
        if self._checked is config.rotations:
            return
        local = config.rotations[self.rotation_layout.elements]
        bad = spread_triangles(local, self.interpolation, self._lam2)
        if bad.size:
            raise CoefficientsTooSpread("rotation coefficients cannot be interpolated", triangle=int(bad[0]))
        self._checked = config.rotations

    def _chunks(self, batch_fn, config: Configuration, tangent: Optional[TangentVector] = None):
        m_loc, C_loc = self._local(config)
        n_tri = self.mesh.n_triangles
        z = m_loc.reshape(n_tri, -1)
        v = np.zeros((n_tri, 3 * self.rotation_layout.n_local))
        if tangent is not None:
            z = z + tangent.deformation[self.deformation_layout.elements].reshape(n_tri, -1)
            v = tangent.rotation[self.rotation_layout.elements].reshape(n_tri, -1)
        z = np.concatenate([z, v], axis=1)
        for start, stop, index, geo in self._geometry_chunks:
            out = batch_fn(jnp.asarray(z[index]), jnp.asarray(C_loc[index]), self._shapes, geo)
            yield start, stop, np.asarray(out)[: stop - start]

    def _split_geometry(self) -> List[Tuple[int, int, np.ndarray, Dict[str, jnp.ndarray]]]:
        """Fixed-size triangle chunks; the last one is padded by repeating its final triangle."""
        n_tri = self.mesh.n_triangles
        size = min(self.chunk_size, n_tri)
        chunks = []
        for start in range(0, n_tri, size):
            stop = min(start + size, n_tri)
            index = np.minimum(np.arange(start, start + size), n_tri - 1)
            geo = {key: jnp.asarray(self._geometry[key][index]) for key in _GEOMETRY_KEYS}
            chunks.append((start, stop, index, geo))
        return chunks

    def element_energies(self, config: Configuration) -> np.ndarray:
        self.check_configuration(config)
        energies = np.zeros(self.mesh.n_triangles)
        for start, stop, out in self._chunks(self._energy_batch, config):
            energies[start:stop] = out
        bad = np.flatnonzero(~np.isfinite(energies))
        if bad.size:
            raise CoefficientsTooSpread("non-finite element energy", triangle=int(bad[0]))
        return energies

    def internal_energy(self, config: Configuration) -> float:
        started = time.perf_counter()
        value = float(np.sum(self.element_energies(config)))
        logger.debug("energy pass %.3fs", time.perf_counter() - started)
        return value

    def energy(self, config: Configuration) -> float:
        return self.internal_energy(config) - self.external_potential(config)

    def gradient_vector(self, config: Configuration, tangent: Optional[TangentVector] = None) -> np.ndarray:
        """Unmasked gradient of the pulled-back energy at ``tangent`` (zero by default), flat."""
        self.check_configuration(config)
        started = time.perf_counter()
        g = np.zeros(self.n_dofs)
        for start, stop, out in self._chunks(self._gradient_batch, config, tangent):
            np.add.at(g, self._dofs[start:stop], out)
        g[: 3 * self.n_deformation] -= self.load_vector.ravel()
        if not np.all(np.isfinite(g)):
            raise CoefficientsTooSpread("non-finite energy gradient")
        logger.debug("gradient pass %.3fs", time.perf_counter() - started)
        return g

    def gradient(self, config: Configuration) -> TangentVector:
        vector = TangentVector.from_flat(self.gradient_vector(config), self.n_deformation)
        return mask(self.boundary_conditions, vector)

    def pullback_gradient(self, config: Configuration, tangent: TangentVector) -> TangentVector:
        return TangentVector.from_flat(self.gradient_vector(config, tangent), self.n_deformation)

    def hessian(self, config: Configuration) -> sparse.csr_matrix:
        """Symmetric Hessian of the pulled-back energy, unmasked."""
        self.check_configuration(config)
        started = time.perf_counter()
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        vals: List[np.ndarray] = []
        for start, stop, out in self._chunks(self._hessian_batch, config):
            dofs = self._dofs[start:stop]
            rows.append(np.repeat(dofs, dofs.shape[1], axis=1).ravel())
            cols.append(np.tile(dofs, (1, dofs.shape[1])).ravel())
            vals.append(out.ravel())
        H = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n_dofs, self.n_dofs)
        ).tocsr()
        H = 0.5 * (H + H.T)
        logger.debug("hessian pass %.3fs, %d nonzeros", time.perf_counter() - started, H.nnz)
        return H.tocsr()

    # pointwise sampling

    def sample(self, config: Configuration, triangles: np.ndarray, points: np.ndarray):
        """Deformation, rotation and strains (E, K) at reference points of the given triangles."""
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1)
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        _, jac, sec = self.provider.evaluate(triangles, points)
        table = geometry_table(jac, sec)
        lam1, dlam1 = shape_functions(self.deformation_layout.order, points)
        lam2, dlam2 = shape_functions(self.rotation_layout.order, points)
        m_loc, C_loc = self._local(config)
        out = self._sample_batch(
            jnp.asarray(m_loc[triangles]),
            jnp.asarray(C_loc[triangles]),
            jnp.asarray(lam1),
            jnp.asarray(dlam1),
            jnp.asarray(lam2),
            jnp.asarray(dlam2),
            jnp.asarray(table["contravariant"]),
            jnp.asarray(table["a"]),
        )
        return tuple(np.asarray(x) for x in out)

    def surface_geometry(self, triangle: int, x: Sequence[float]) -> SurfaceGeometry:
        return surface_geometry(self.provider, triangle, x)

    def strain_state(self, config: Configuration, triangle: int, x: Sequence[float]):
        self.check_configuration(config)
        position, Q, E, Ke = self.sample(config, np.array([triangle]), np.asarray(x, dtype=float).reshape(1, 2))
        return position[0], Rotation(Q[0]), StrainState(E=E[0], K=Ke[0])

    def reconstruct(self, config: Configuration, triangle: int, x: Sequence[float], x3: float) -> np.ndarray:
        position, Q, strains = self.strain_state(config, triangle, x)
        return reconstruct_point(position, Q, self.surface_geometry(triangle, x), strains, self.material, x3)


# module-level entry points


def total_energy(config: Configuration, problem: ShellProblem) -> float:
    return problem.energy(config)


def gradient(config: Configuration, problem: ShellProblem) -> TangentVector:
    return problem.gradient(config)


def hessian(config: Configuration, problem: ShellProblem) -> sparse.csr_matrix:
    return problem.hessian(config)


def external_potential(config: Configuration, problem: ShellProblem) -> float:
    return problem.external_potential(config)
