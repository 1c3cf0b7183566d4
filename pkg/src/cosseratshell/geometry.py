from __future__ import annotations

from typing import Callable, Tuple

import jax
import jax.numpy as jnp
import numpy as np

from .mesh import ParamMesh, shape_functions, shape_hessians


ImmersionSample = Tuple[np.ndarray, np.ndarray, np.ndarray]


class GeometryProvider:
    """Reference immersion m0 composed with the reference-triangle map of each triangle."""

    kind = "abstract"

    def evaluate(self, triangles: np.ndarray, points: np.ndarray) -> ImmersionSample:
        """Positions (K, 3), Jacobians (K, 3, 2) and second derivatives (K, 3, 2, 2).

        ``triangles`` is (K,) and ``points`` (K, 2); second derivatives are indexed
        ``[component, alpha, beta]``.
        """
        raise NotImplementedError

    def evaluate_grid(self, n_triangles: int, points: np.ndarray) -> ImmersionSample:
        """Same reference points on every triangle; arrays gain a leading (M, Q) shape."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        q = points.shape[0]
        tri = np.repeat(np.arange(n_triangles), q)
        pts = np.tile(points, (n_triangles, 1))
        pos, jac, sec = self.evaluate(tri, pts)
        return (
            pos.reshape(n_triangles, q, 3),
            jac.reshape(n_triangles, q, 3, 2),
            sec.reshape(n_triangles, q, 3, 2, 2),
        )


class FEGeometry(GeometryProvider):
    kind = "fe"

    def __init__(self, mesh: ParamMesh):
        self.mesh = mesh

    def evaluate(self, triangles: np.ndarray, points: np.ndarray) -> ImmersionSample:
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1)
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        order = self.mesh.geometry_order
        values, gradients = shape_functions(order, points)
        hessians = shape_hessians(order, points)
        nodal = self.mesh.positions[self.mesh.triangles[triangles]]  # (K, n, 3)
        positions = np.einsum("kn,knd->kd", values, nodal)
        jacobians = np.einsum("kna,knd->kda", gradients, nodal)
        second = np.einsum("knab,knd->kdab", hessians, nodal)
        return positions, jacobians, second


class AnalyticGeometry(GeometryProvider):
    """Closed-form parametrization evaluated through each triangle's parameter-domain corners."""

    kind = "analytic"

    def __init__(self, parametrization: Callable, corners: np.ndarray):
        self.parametrization = parametrization
        self.corners = np.asarray(corners, dtype=float)  # (M, 3, d)

        def local(x, c):
            return parametrization(c[0] + (c[1] - c[0]) * x[0] + (c[2] - c[0]) * x[1])

        def sample(x, c):
            return local(x, c), jax.jacfwd(local)(x, c), jax.hessian(local)(x, c)

        self._sample = jax.jit(jax.vmap(sample))

    def evaluate(self, triangles: np.ndarray, points: np.ndarray) -> ImmersionSample:
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1)
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        pos, jac, sec = self._sample(jnp.asarray(points), jnp.asarray(self.corners[triangles]))
        return np.asarray(pos), np.asarray(jac), np.asarray(sec)

    def at_parameters(self, params: np.ndarray) -> np.ndarray:
        return np.asarray(jax.vmap(self.parametrization)(jnp.asarray(params, dtype=float)))
