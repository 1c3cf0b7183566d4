"""
Continuum quantities of the Cosserat shell.

Surface geometry of the reference immersion, the strain measures, the
quadratic energy forms and the membrane / bending densities. Density functions
are written with ``jax.numpy`` so the assembly can differentiate them; the
public wrappers accept numpy arrays and return floats.

Tensor conventions: ``u (x) v = u v^T``, ``n0 X`` is the row vector ``n0^T X``,
and ``axl`` is the convention of :mod:`cosseratshell.so3`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence

import jax.numpy as jnp
import numpy as np

from .errors import DegenerateImmersion
from .geometry import GeometryProvider
from .models import MaterialParams
from .so3 import Rotation, Skew3, as_matrix, axl, polar


AREA_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    position: np.ndarray
    covariant: np.ndarray  # (2, 3) rows a_1, a_2
    contravariant: np.ndarray  # (2, 3) rows a^1, a^2
    normal: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    gauss_curvature: float
    mean_curvature: float
    area_element: float
    principal_curvatures: np.ndarray  # (2,)

    @property
    def jacobian(self) -> np.ndarray:
        return self.covariant.T


@dataclass(frozen=True, eq=False)
class StrainState:
    E: np.ndarray
    K: np.ndarray


def geometry_table(jacobians: np.ndarray, second: np.ndarray) -> Dict[str, np.ndarray]:
    """Vectorised surface geometry for Jacobians (..., 3, 2) and second derivatives (..., 3, 2, 2)."""
    J = np.asarray(jacobians, dtype=float)
    S = np.asarray(second, dtype=float)
    a1, a2 = J[..., :, 0], J[..., :, 1]
    cross = np.cross(a1, a2)
    area = np.linalg.norm(cross, axis=-1)
    safe_area = np.where(area > 0.0, area, 1.0)
    normal = cross / safe_area[..., None]

    metric = np.einsum("...ia,...ib->...ab", J, J)
    contravariant = np.linalg.solve(metric, np.swapaxes(J, -1, -2))  # (..., 2, 3)
    a = np.einsum("...ia,...aj->...ij", J, contravariant)

    # d(a1 x a2)/dx_alpha from the second derivatives, then the normalized quotient rule
    dcross = np.cross(S[..., :, 0, :].swapaxes(-1, -2), a2[..., None, :]) + np.cross(
        a1[..., None, :], S[..., :, 1, :].swapaxes(-1, -2)
    )  # (..., 2, 3), row alpha
    dnormal = (dcross - normal[..., None, :] * np.einsum("...j,...aj->...a", normal, dcross)[..., None]) / safe_area[
        ..., None, None
    ]
    b = -np.einsum("...ai,...aj->...ij", dnormal, contravariant)
    c = (np.einsum("...i,...j->...ij", a1, a2) - np.einsum("...i,...j->...ij", a2, a1)) / safe_area[..., None, None]

    shape_operator = -np.einsum("...ai,...bi->...ab", contravariant, dnormal)
    gauss = np.linalg.det(shape_operator)
    mean = 0.5 * np.trace(shape_operator, axis1=-2, axis2=-1)
    spread = np.sqrt(np.maximum(mean * mean - gauss, 0.0))
    principal = np.stack([mean + spread, mean - spread], axis=-1)
    return {
        "covariant": np.swapaxes(J, -1, -2),
        "contravariant": contravariant,
        "normal": normal,
        "a": a,
        "b": b,
        "c": c,
        "K": gauss,
        "H": mean,
        "area": area,
        "principal": principal,
    }


def surface_geometry(provider: GeometryProvider, triangle: int, x: Sequence[float]) -> SurfaceGeometry:
    position, jacobian, second = provider.evaluate(np.array([triangle]), np.asarray(x, dtype=float).reshape(1, 2))
    table = geometry_table(jacobian, second)
    area = float(table["area"][0])
    if not area >= AREA_FLOOR:
        raise DegenerateImmersion(f"area element {area:.3g} below {AREA_FLOOR:g}", triangle=triangle)
    return SurfaceGeometry(
        position=position[0],
        covariant=table["covariant"][0],
        contravariant=table["contravariant"][0],
        normal=table["normal"][0],
        a=table["a"][0],
        b=table["b"][0],
        c=table["c"][0],
        gauss_curvature=float(table["K"][0]),
        mean_curvature=float(table["H"][0]),
        area_element=area,
        principal_curvatures=table["principal"][0],
    )


def strain_tensors(geom: SurfaceGeometry, grad_m: np.ndarray, Q, body_derivatives: Sequence[Skew3]) -> StrainState:
    Qm = as_matrix(Q)
    E = Qm.T @ np.asarray(grad_m, dtype=float) @ geom.contravariant - geom.a
    k = np.stack([axl(d) for d in body_derivatives], axis=1)  # (3, 2)
    return StrainState(E=E, K=k @ geom.contravariant)


# energy forms


def _sym(X):
    return 0.5 * (X + X.T)


def _skew(X):
    return 0.5 * (X - X.T)


def _inner(X, Y):
    return jnp.sum(X * Y)


def form_m(X, mat: MaterialParams):
    return mat.mu * _inner(_sym(X), _sym(X)) + mat.mu_c * _inner(_skew(X), _skew(X)) + mat.reduced_lambda * jnp.trace(X) ** 2


def form_mixt(X, Y, mat: MaterialParams):
    return (
        mat.mu * _inner(_sym(X), _sym(Y))
        + mat.mu_c * _inner(_skew(X), _skew(Y))
        + mat.reduced_lambda * jnp.trace(X) * jnp.trace(Y)
    )


def form_mp(X, mat: MaterialParams):
    return mat.mu * _inner(_sym(X), _sym(X)) + mat.mu_c * _inner(_skew(X), _skew(X)) + 0.5 * mat.lame_lambda * jnp.trace(X) ** 2


def form_coss(X, Y, normal, mat: MaterialParams):
    factor = (mat.mu - mat.mu_c) ** 2 / (2.0 * (mat.mu + mat.mu_c))
    return form_mixt(X, Y, mat) - factor * jnp.dot(normal @ X, normal @ Y)


def curvature_form(X, mat: MaterialParams):
    sym = _sym(X)
    dev = sym - jnp.trace(X) / 3.0 * jnp.eye(3)
    return mat.mu * mat.length_c**2 * (
        mat.b1 * _inner(dev, dev) + mat.b2 * _inner(_skew(X), _skew(X)) + mat.b3 * jnp.trace(X) ** 2
    )


def membrane_density(E, Ke, b, c, K, H, normal, mat: MaterialParams, variant: str = "main"):
    h = mat.thickness
    if variant == "birsan":
        w2 = lambda X: form_coss(X, X, normal, mat)
        w_mixt = lambda X, Y: form_coss(X, Y, normal, mat)
        w_mp = w2
    elif variant == "main":
        w2 = lambda X: form_m(X, mat)
        w_mixt = lambda X, Y: form_mixt(X, Y, mat)
        w_mp = lambda X: form_mp(X, mat)
    else:
        raise ValueError(f"unknown energy variant '{variant}'")
    cK = c @ Ke
    Eb_cK = E @ b + cK
    return (
        (h - K * h**3 / 12.0) * w2(E)
        + (h**3 / 12.0 - K * h**5 / 80.0) * w2(Eb_cK)
        + (h**3 / 6.0) * w_mixt(E, cK @ b - 2.0 * H * cK)
        + (h**5 / 80.0) * w_mp(Eb_cK @ b)
    )


def bending_density(Ke, b, K, mat: MaterialParams):
    h = mat.thickness
    return (
        (h - K * h**3 / 12.0) * curvature_form(Ke, mat)
        + (h**3 / 12.0 - K * h**5 / 80.0) * curvature_form(Ke @ b, mat)
        + (h**5 / 80.0) * curvature_form(Ke @ b @ b, mat)
    )


def quadratic_forms(kind: str, X: np.ndarray, Y=None, mat: MaterialParams = MaterialParams(), normal=None) -> float:
    X = jnp.asarray(X, dtype=float)
    if kind == "m":
        return float(form_m(X, mat))
    if kind == "mp":
        return float(form_mp(X, mat))
    if Y is None:
        raise ValueError(f"form '{kind}' takes two arguments")
    Y = jnp.asarray(Y, dtype=float)
    if kind == "mixt":
        return float(form_mixt(X, Y, mat))
    if kind == "coss":
        if normal is None:
            raise ValueError("form 'coss' needs the unit normal")
        return float(form_coss(X, Y, jnp.asarray(normal, dtype=float), mat))
    raise ValueError(f"unknown quadratic form '{kind}'")


def w_curv(X: np.ndarray, mat: MaterialParams) -> float:
    return float(curvature_form(jnp.asarray(X, dtype=float), mat))


def w_memb(strains: StrainState, geom: SurfaceGeometry, mat: MaterialParams, variant: str = "main") -> float:
    return float(
        membrane_density(
            jnp.asarray(strains.E),
            jnp.asarray(strains.K),
            jnp.asarray(geom.b),
            jnp.asarray(geom.c),
            geom.gauss_curvature,
            geom.mean_curvature,
            jnp.asarray(geom.normal),
            mat,
            variant,
        )
    )


def w_bend(Ke: np.ndarray, geom: SurfaceGeometry, mat: MaterialParams) -> float:
    return float(bending_density(jnp.asarray(Ke, dtype=float), jnp.asarray(geom.b), geom.gauss_curvature, mat))


def reference_microrotation(geom: SurfaceGeometry) -> Rotation:
    if not geom.area_element >= AREA_FLOOR:
        raise DegenerateImmersion(f"area element {geom.area_element:.3g} below {AREA_FLOOR:g}")
    return polar(np.column_stack([geom.covariant[0], geom.covariant[1], geom.normal]))


def thickness_factors(strains: StrainState, geom: SurfaceGeometry, mat: MaterialParams):
    """(rho_m, rho_b) of the through-thickness reconstruction."""
    ratio = mat.lame_lambda / (mat.lame_lambda + 2.0 * mat.mu)
    rho_m = 1.0 - ratio * float(np.trace(strains.E))
    rho_b = -ratio * float(np.trace(strains.E @ geom.b + geom.c @ strains.K))
    return rho_m, rho_b


def reconstruct(
    position: np.ndarray, Q, geom: SurfaceGeometry, strains: StrainState, mat: MaterialParams, x3: float
) -> np.ndarray:
    if abs(x3) >= 0.5 * mat.thickness:
        raise ValueError(f"|x3| = {abs(x3):g} must stay below h/2 = {0.5 * mat.thickness:g}")
    rho_m, rho_b = thickness_factors(strains, geom, mat)
    d3 = as_matrix(Q) @ geom.normal
    return np.asarray(position, dtype=float) + x3 * rho_m * d3 + 0.5 * x3 * x3 * rho_b * d3


def directors(Q) -> np.ndarray:
    """Columns d1, d2, d3 of the microrotation as rows."""
    return as_matrix(Q).T.copy()
