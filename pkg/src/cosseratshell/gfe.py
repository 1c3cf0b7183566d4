"""
Geometric finite element interpolation of rotation-valued nodal data.

Two rules are provided. The projection rule is the polar factor of the
Euclidean blend ``sum_i w_i R_i``. The geodesic rule is the weighted Karcher
minimizer of ``sum_i w_i dist(R_i, R)^2``; it is solved by Newton's method in
the body-frame tangent of the current iterate, started at the coefficient with
the largest weight and restarted from the projection value when that fails.

``distance="frobenius"`` replaces the intrinsic distance by the embedding
distance ``|R - R_i|_F``; its minimizer coincides with the projection rule,
which the tests use as an oracle.

The jax kernels carry custom JVP rules: the polar factor through its closed
differential, the geodesic rule through implicit differentiation of its
first-order condition. Nothing on the energy path is differentiated
numerically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache, partial
from typing import Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from jax import lax

from .errors import CoefficientsTooSpread, NoConvergence, NonPositiveDeterminant
from .mesh import LagrangeLayout, shape_functions, shape_kernel
from .so3 import (
    Rotation,
    RotationLike,
    Skew3,
    _check_determinant,
    as_matrix,
    cross_kernel,
    exp_kernel,
    log_kernel,
    polar_kernel,
    vee,
    vee_kernel,
)


logger = logging.getLogger(__name__)

GEODESIC_TOL = 1e-13
GEODESIC_MAX_ITER = 50
RESIDUAL_LIMIT = 1e-12
INTERPOLATION_KINDS = ("geodesic", "projection")
DISTANCES = ("intrinsic", "frobenius")


@dataclass(frozen=True, eq=False)
class RotationField:
    layout: LagrangeLayout
    values: np.ndarray  # (N, 3, 3)
    kind: str = "geodesic"

    def __post_init__(self):
        if self.kind not in INTERPOLATION_KINDS:
            raise ValueError(f"unknown interpolation kind '{self.kind}'")
        values = np.array(self.values, dtype=float).reshape(-1, 3, 3)
        if values.shape[0] != self.layout.n_points:
            raise ValueError(f"rotation field needs {self.layout.n_points} values, got {values.shape[0]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def identity(cls, layout: LagrangeLayout, kind: str = "geodesic") -> "RotationField":
        return cls(layout, np.broadcast_to(np.eye(3), (layout.n_points, 3, 3)), kind)

    @property
    def order(self) -> int:
        return self.layout.order

    def local(self, triangle: int) -> np.ndarray:
        return self.values[self.layout.elements[triangle]]

    def with_values(self, values: np.ndarray) -> "RotationField":
        return replace(self, values=values)


# residuals of the first-order condition, body frame of the candidate


def _intrinsic_residual(M):
    return log_kernel(M)


def _frobenius_residual(M):
    return vee_kernel(0.5 * (M - M.T))


def _residual_fn(distance: str):
    if distance == "intrinsic":
        return _intrinsic_residual
    if distance == "frobenius":
        return _frobenius_residual
    raise ValueError(f"unknown distance '{distance}' (expected one of {DISTANCES})")


def _condition(distance, R, coeffs, weights, delta):
    """sum_i w_i res(exp(-delta) R^T R_i); zero at the minimizer when delta = 0."""
    residual = _residual_fn(distance)
    rel = exp_kernel(-delta) @ R.T
    return jnp.einsum("i,ij->j", weights, jax.vmap(lambda C: residual(rel @ C))(coeffs))


def _newton(distance, coeffs, weights, R0):
    zero = jnp.zeros(3, dtype=coeffs.dtype)

    def residual_norm(R):
        return jnp.linalg.norm(_condition(distance, R, coeffs, weights, zero))

    def cond(state):
        _, k, err = state
        return (err > GEODESIC_TOL) & (k < GEODESIC_MAX_ITER)

    def body(state):
        R, k, _ = state
        phi = lambda d: _condition(distance, R, coeffs, weights, d)
        step = -jnp.linalg.solve(jax.jacfwd(phi)(zero), phi(zero))
        R_next = R @ exp_kernel(step)
        return R_next, k + 1, residual_norm(R_next)

    R, _, err = lax.while_loop(cond, body, (R0, jnp.array(0), residual_norm(R0)))
    return R, err


def _geodesic_solve(distance, coeffs, weights):
    """Minimizer and residual norm; largest-weight start, projection restart."""
    R, err = _newton(distance, coeffs, weights, coeffs[jnp.argmax(weights)])
    return lax.cond(
        err <= GEODESIC_TOL,
        lambda: (R, err),
        lambda: _newton(distance, coeffs, weights, polar_kernel(jnp.einsum("i,ijk->jk", weights, coeffs))),
    )


@partial(jax.custom_jvp, nondiff_argnums=(0,))
def geodesic_kernel(distance, coeffs, weights):
    return _geodesic_solve(distance, coeffs, weights)[0]


@geodesic_kernel.defjvp
def _geodesic_kernel_jvp(distance, primals, tangents):
    coeffs, weights = primals
    d_coeffs, d_weights = tangents
    R = geodesic_kernel(distance, coeffs, weights)
    zero = jnp.zeros(3, dtype=coeffs.dtype)
    jac = jax.jacfwd(lambda d: _condition(distance, R, coeffs, weights, d))(zero)
    _, rhs = jax.jvp(lambda C, w: _condition(distance, R, C, w, zero), (coeffs, weights), (d_coeffs, d_weights))
    d_delta = -jnp.linalg.solve(jac, rhs)
    return R, R @ cross_kernel(d_delta)


def projection_kernel(coeffs, weights):
    return polar_kernel(jnp.einsum("i,ijk->jk", weights, coeffs))


def interpolation_kernel(kind: str, distance: str = "intrinsic"):
    """jax function (coeffs (n, 3, 3), weights (n,)) -> rotation for the given rule."""
    if kind == "projection":
        return projection_kernel
    if kind == "geodesic":
        return partial(geodesic_kernel, distance)
    raise ValueError(f"unknown interpolation kind '{kind}'")


@lru_cache(maxsize=None)
def _solve_jit(distance: str):
    return jax.jit(lambda C, w: _geodesic_solve(distance, C, w))


@lru_cache(maxsize=None)
def _batched_residual(distance: str):
    solve = jax.vmap(lambda C, w: _geodesic_solve(distance, C, w)[1])
    return jax.jit(solve)


# admissibility


def max_pairwise_angle(coeffs: np.ndarray) -> np.ndarray:
    """Largest pairwise rotation angle within each coefficient set, coeffs (..., n, 3, 3)."""
    C = np.asarray(coeffs, dtype=float)
    traces = np.einsum("...iab,...jab->...ij", C, C)
    cosines = np.clip(0.5 * (traces - 1.0), -1.0, 1.0)
    return np.arccos(np.min(cosines, axis=(-2, -1)))


def check_admissible(coeffs: Sequence[RotationLike], kind: str = "geodesic", triangle=None) -> None:
    matrices = np.stack([as_matrix(c) for c in coeffs])
    if kind == "geodesic":
        angle = float(max_pairwise_angle(matrices))
        if not angle < 0.5 * np.pi:
            raise CoefficientsTooSpread(
                f"coefficients {angle:.4g} rad apart, geodesic interpolation needs less than pi/2", triangle=triangle
            )
    elif kind != "projection":
        raise ValueError(f"unknown interpolation kind '{kind}'")


def spread_triangles(local_values: np.ndarray, kind: str, weights: np.ndarray, distance: str = "intrinsic") -> np.ndarray:
    """Triangles whose coefficients cannot be interpolated at the given weight rows.

    ``local_values`` is (M, n, 3, 3) and ``weights`` (Q, n). For the geodesic rule a
    triangle fails when two coefficients are pi/2 or more apart or the Newton solve
    misses the residual limit at a weight row; for the projection rule when a blend
    has non-positive determinant.
    """
    local_values = np.asarray(local_values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if kind == "projection":
        blends = np.einsum("qn,mnij->mqij", weights, local_values)
        dets = np.linalg.det(blends)
        scale = np.linalg.norm(blends, axis=(-2, -1)) ** 3
        return np.flatnonzero(np.any(dets <= 1e-14 * scale, axis=1))
    bad = max_pairwise_angle(local_values) >= 0.5 * np.pi
    m, q = local_values.shape[0], weights.shape[0]
    ok = np.flatnonzero(~bad)
    if ok.size:
        C = np.repeat(local_values[ok], q, axis=0)
        W = np.tile(weights, (ok.size, 1))
        residuals = np.asarray(_batched_residual(distance)(jnp.asarray(C), jnp.asarray(W))).reshape(ok.size, q)
        bad[ok[~np.all(residuals <= RESIDUAL_LIMIT, axis=1)]] = True
    return np.flatnonzero(bad[:m])


# public interpolation


def interp_projection(coeffs: Sequence[RotationLike], weights: Sequence[float]) -> Rotation:
    C = np.stack([as_matrix(c) for c in coeffs])
    w = np.asarray(weights, dtype=float)
    blend = np.einsum("i,ijk->jk", w, C)
    try:
        _check_determinant(blend)
    except NonPositiveDeterminant as exc:
        raise CoefficientsTooSpread(f"projection blend is singular ({exc})") from exc
    return Rotation(np.asarray(jax.jit(projection_kernel)(jnp.asarray(C), jnp.asarray(w))))


def interp_geodesic(coeffs: Sequence[RotationLike], weights: Sequence[float], distance: str = "intrinsic") -> Rotation:
    C = np.stack([as_matrix(c) for c in coeffs])
    w = np.asarray(weights, dtype=float)
    check_admissible(C, "geodesic")
    R, err = _solve_jit(distance)(jnp.asarray(C), jnp.asarray(w))
    err = float(err)
    if not err < RESIDUAL_LIMIT:
        raise NoConvergence(f"geodesic interpolation residual {err:.3g} after {GEODESIC_MAX_ITER} Newton steps")
    return Rotation(np.asarray(R))


def interpolate(field: RotationField, triangle: int, x: Sequence[float]) -> Rotation:
    values, _ = shape_functions(field.order, np.asarray(x, dtype=float))
    coeffs = field.local(triangle)
    if field.kind == "projection":
        return interp_projection(coeffs, values)
    return interp_geodesic(coeffs, values)


@lru_cache(maxsize=None)
def _point_jacobian(kind: str, order: int):
    kernel = interpolation_kernel(kind)

    def value(C, x):
        return kernel(C, shape_kernel(order, x))

    return jax.jit(lambda C, x: (value(C, x), jax.jacfwd(value, argnums=1)(C, x)))


@lru_cache(maxsize=None)
def _coefficient_jacobian(kind: str, order: int):
    kernel = interpolation_kernel(kind)

    def perturbed(v, C, x, i):
        Ci = C.at[i].set(C[i] @ exp_kernel(v))
        return kernel(Ci, shape_kernel(order, x))

    return jax.jit(lambda C, x, i: jax.jacfwd(perturbed)(jnp.zeros(3), C, x, i))


def _checked_local(field: RotationField, triangle: int, x: np.ndarray) -> np.ndarray:
    coeffs = field.local(triangle)
    weights, _ = shape_functions(field.order, x)
    if field.kind == "projection":
        interp_projection(coeffs, weights)
    else:
        check_admissible(coeffs, "geodesic", triangle=triangle)
    return coeffs


def interp_jacobian(field: RotationField, triangle: int, x: Sequence[float]) -> Tuple[Rotation, Skew3, Skew3]:
    """Value Q and the body-frame derivatives Q^T dQ/dx_1, Q^T dQ/dx_2."""
    x = np.asarray(x, dtype=float).reshape(2)
    coeffs = _checked_local(field, triangle, x)
    Q, dQ = _point_jacobian(field.kind, field.order)(jnp.asarray(coeffs), jnp.asarray(x))
    Q, dQ = np.asarray(Q), np.asarray(dQ)
    rotation = Rotation(Q)
    body = [Q.T @ dQ[:, :, alpha] for alpha in range(2)]
    return rotation, Skew3.from_matrix(_skew_part(body[0]), atol=1e-8), Skew3.from_matrix(_skew_part(body[1]), atol=1e-8)


def interp_coefficient_derivative(field: RotationField, triangle: int, x: Sequence[float], node: int) -> np.ndarray:
    """3x3 map from a body tangent v at coefficient ``node`` (local index) to the body tangent at Q."""
    x = np.asarray(x, dtype=float).reshape(2)
    coeffs = _checked_local(field, triangle, x)
    if not 0 <= node < coeffs.shape[0]:
        raise IndexError(f"local node {node} outside 0..{coeffs.shape[0] - 1}")
    Q, _ = _point_jacobian(field.kind, field.order)(jnp.asarray(coeffs), jnp.asarray(x))
    Q = np.asarray(Q)
    dQ = np.asarray(_coefficient_jacobian(field.kind, field.order)(jnp.asarray(coeffs), jnp.asarray(x), node))
    return np.column_stack([vee(Q.T @ dQ[:, :, j]) for j in range(3)])


def _skew_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A - A.T)
