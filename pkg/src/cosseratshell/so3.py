"""
Rotation group algebra.

Conventions used throughout the package:

* ``axl(A) = (A23, A31, A12)`` and ``hat`` is its inverse, so
  ``hat(v) = -cross_matrix(v)`` where ``cross_matrix(v) @ w = v x w``.
* Rotation vectors follow the usual right-hand rule:
  ``exp_map((0, 0, t))`` turns by ``t`` about ``+e3`` and ``log_map`` inverts it.
* Tangent vectors at a rotation ``R`` are body-frame, ``R @ exp_map(v)``.

The ``*_kernel`` functions are jax-traceable versions used inside the energy
path; the public functions take and return numpy arrays / ``Rotation`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import jax
import jax.numpy as jnp
import numpy as np
from jax import lax

from .errors import AngleAtPi, NoConvergence, NonPositiveDeterminant


POLAR_TOL = 1e-14
POLAR_MAX_ITER = 30
TAYLOR_THRESHOLD = 1e-6
PI_MARGIN = 1e-8
DETERMINANT_FLOOR = 1e-14


def _renormalized(matrix: np.ndarray) -> np.ndarray:
    eye = np.eye(3)
    for _ in range(4):
        if np.linalg.norm(matrix.T @ matrix - eye) <= 1e-15:
            break
        matrix = 0.5 * (matrix + np.linalg.inv(matrix).T)
    return matrix


@dataclass(frozen=True, eq=False)
class Rotation:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(3, 3)
        if np.linalg.norm(m.T @ m - np.eye(3)) > 1e-6 or np.linalg.det(m) <= 0.0:
            raise ValueError("matrix is not a rotation")
        m = _renormalized(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    def compose(self, other: "Rotation") -> "Rotation":
        return Rotation(self.matrix @ as_matrix(other))

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.matrix.T

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return self.compose(other)

    def __repr__(self) -> str:
        angle = math.acos(float(np.clip(0.5 * (np.trace(self.matrix) - 1.0), -1.0, 1.0)))
        return f"Rotation(angle={angle:.6g})"


@dataclass(frozen=True, eq=False)
class Skew3:
    vector: np.ndarray  # (A23, A31, A12)

    def __post_init__(self):
        v = np.array(self.vector, dtype=float).reshape(3)
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, atol: float = 1e-12) -> "Skew3":
        arr = np.asarray(matrix, dtype=float)
        if np.max(np.abs(arr + arr.T)) > atol * max(1.0, np.max(np.abs(arr))):
            raise ValueError("matrix is not antisymmetric")
        return cls(axl(arr))

    @property
    def matrix(self) -> np.ndarray:
        return hat(self.vector)


RotationLike = Union[Rotation, np.ndarray]


def as_matrix(rotation: RotationLike) -> np.ndarray:
    if isinstance(rotation, Rotation):
        return rotation.matrix
    return np.asarray(rotation, dtype=float)


def axl(A: Union[Skew3, np.ndarray]) -> np.ndarray:
    if isinstance(A, Skew3):
        return np.array(A.vector)
    A = np.asarray(A, dtype=float)
    return np.array([A[1, 2], A[2, 0], A[0, 1]])


def hat(v: np.ndarray) -> np.ndarray:
    v1, v2, v3 = (float(x) for x in np.asarray(v, dtype=float).reshape(3))
    return np.array([[0.0, v3, -v2], [-v3, 0.0, v1], [v2, -v1, 0.0]])


def cross_matrix(v: np.ndarray) -> np.ndarray:
    return -hat(v)


def vee(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def random_rotation(rng: np.random.Generator) -> Rotation:
    q = rng.standard_normal(4)
    w, x, y, z = q / np.linalg.norm(q)
    return Rotation(
        np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )
    )


# jax kernels


def cross_kernel(v):
    zero = jnp.zeros_like(v[0])
    return jnp.array(
        [
            [zero, -v[2], v[1]],
            [v[2], zero, -v[0]],
            [-v[1], v[0], zero],
        ]
    )


def vee_kernel(A):
    return jnp.array([A[2, 1], A[0, 2], A[1, 0]])


def axl_kernel(A):
    return jnp.array([A[1, 2], A[2, 0], A[0, 1]])


def exp_kernel(v):
    theta2 = jnp.dot(v, v)
    small = theta2 < TAYLOR_THRESHOLD**2
    safe2 = jnp.where(small, 1.0, theta2)
    theta = jnp.sqrt(safe2)
    half_sin = jnp.sin(0.5 * theta)
    a = jnp.where(small, 1.0 - theta2 / 6.0, jnp.sin(theta) / theta)
    b = jnp.where(small, 0.5 - theta2 / 24.0, 2.0 * half_sin * half_sin / safe2)
    W = cross_kernel(v)
    return jnp.eye(3) + a * W + b * (W @ W)


def log_kernel(R):
    """Rotation vector of R for angles away from pi."""
    s = 0.5 * vee_kernel(R - R.T)
    c = 0.5 * (jnp.trace(R) - 1.0)
    s2 = jnp.dot(s, s)
    small = (s2 < TAYLOR_THRESHOLD**2) & (c > 0.0)
    safe2 = jnp.where(small, 1.0, s2)
    sin_theta = jnp.sqrt(safe2)
    factor = jnp.where(small, 1.0 + s2 / 6.0 + 3.0 * s2 * s2 / 40.0, jnp.arctan2(sin_theta, c) / sin_theta)
    return factor * s


def _polar_newton(F):
    def cond(state):
        _, k, err = state
        return (err > POLAR_TOL) & (k < POLAR_MAX_ITER)

    def body(state):
        X, k, _ = state
        X_inv_t = jnp.linalg.inv(X).T
        alpha = jnp.sqrt(jnp.linalg.norm(X_inv_t) / jnp.linalg.norm(X))
        Y = 0.5 * (alpha * X + X_inv_t / alpha)
        err = jnp.linalg.norm(Y - X) / jnp.linalg.norm(Y)
        return Y, k + 1, err

    X, _, _ = lax.while_loop(cond, body, (F, jnp.array(0), jnp.array(jnp.inf, dtype=F.dtype)))
    return X


@jax.custom_jvp
def polar_kernel(F):
    return _polar_newton(F)


@polar_kernel.defjvp
def _polar_kernel_jvp(primals, tangents):
    (F,) = primals
    (dF,) = tangents
    R = polar_kernel(F)
    U = R.T @ F
    U = 0.5 * (U + U.T)
    M = R.T @ dF
    omega = jnp.linalg.solve(jnp.trace(U) * jnp.eye(3) - U, vee_kernel(M - M.T))
    return R, R @ cross_kernel(omega)


_exp_jit = jax.jit(exp_kernel)
_polar_jit = jax.jit(polar_kernel)
_polar_jvp_jit = jax.jit(lambda F, dF: jax.jvp(polar_kernel, (F,), (dF,))[1])


# public operations


def exp_map(v: np.ndarray) -> Rotation:
    v = np.asarray(v, dtype=float).reshape(3)
    return Rotation(np.asarray(_exp_jit(jnp.asarray(v))))


def log_map(Q: RotationLike) -> np.ndarray:
    R = as_matrix(Q)
    s = 0.5 * vee(R - R.T)
    c = float(np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0))
    sin_theta = float(np.linalg.norm(s))
    theta = math.atan2(sin_theta, c)
    if sin_theta < TAYLOR_THRESHOLD and c > 0.0:
        s2 = sin_theta * sin_theta
        return (1.0 + s2 / 6.0 + 3.0 * s2 * s2 / 40.0) * s
    if c > 0.0:
        return theta / sin_theta * s

    if math.pi - theta < PI_MARGIN:
        raise AngleAtPi(f"rotation angle {theta:.17g} is within {PI_MARGIN:g} of pi")
    # off-diagonal part is small here; read the axis from the symmetric part
    B = 0.5 * (R + R.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / math.sqrt(B[k, k] * (1.0 - c))
    if float(np.dot(axis, s)) < 0.0:
        axis = -axis
    return theta * axis / np.linalg.norm(axis)


def geodesic_distance(Q1: RotationLike, Q2: RotationLike) -> float:
    return float(np.linalg.norm(log_map(as_matrix(Q1) @ as_matrix(Q2).T)))


def _check_determinant(F: np.ndarray) -> None:
    det = float(np.linalg.det(F))
    if det <= DETERMINANT_FLOOR * np.linalg.norm(F) ** 3:
        raise NonPositiveDeterminant(f"det F = {det:.6g} is not positive")


def polar(F: np.ndarray) -> Rotation:
    F = np.asarray(F, dtype=float).reshape(3, 3)
    _check_determinant(F)
    R = np.asarray(_polar_jit(jnp.asarray(F)))
    if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-12:
        raise NoConvergence(f"polar iteration did not converge in {POLAR_MAX_ITER} steps")
    return Rotation(R)


def polar_differential(F: np.ndarray, dF: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float).reshape(3, 3)
    _check_determinant(F)
    return np.asarray(_polar_jvp_jit(jnp.asarray(F), jnp.asarray(dF, dtype=float).reshape(3, 3)))
