"""
Riemannian trust-region minimization on R^(3 N1) x SO(3)^N2.

The outer loop follows the classic trust-region scheme with a Steihaug-Toint
truncated conjugate gradient inner solver. Steps are taken in the free
(unconstrained) tangent coordinates and mapped back with the retraction
``m + v``, ``R exp(v)``. Trial points whose rotation coefficients cannot be
interpolated count as rejected steps.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import jax
import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from .assembly import Configuration, ShellProblem, TangentVector, apply_dirichlet
from .errors import (
    CoefficientsTooSpread,
    LoadProgramAborted,
    NoConvergence,
    ShellError,
    StalledAtNonstationaryPoint,
)
from .models import DirichletSpec, LoadProgram, TrustRegionSettings
from .so3 import exp_kernel


logger = logging.getLogger(__name__)

# tCG stop reasons
NEGATIVE_CURVATURE = "negative curvature"
EXCEEDED_TR = "exceeded trust region"
REACHED_TARGET_LINEAR = "reached target residual-kappa (linear)"
REACHED_TARGET_SUPERLINEAR = "reached target residual-theta (superlinear)"
MAX_INNER_ITER = "maximum inner iterations"
MODEL_INCREASED = "model increased"

_exp_many = jax.jit(jax.vmap(exp_kernel))

Operator = Union[np.ndarray, sparse.spmatrix, LinearOperator, Callable[[np.ndarray], np.ndarray]]


def retract(config: Configuration, v: TangentVector, t: float = 1.0) -> Configuration:
    deformation = config.deformation + t * np.asarray(v.deformation, dtype=float)
    rotation = np.asarray(v.rotation, dtype=float)
    moved = np.flatnonzero(np.any(rotation != 0.0, axis=1)) if t != 0.0 else np.zeros(0, dtype=np.int64)
    rotations = np.array(config.rotations)
    if moved.size:
        rotations[moved] = np.einsum("nij,njk->nik", rotations[moved], np.asarray(_exp_many(t * rotation[moved])))
    return config.with_values(deformation, rotations)


@dataclass
class TcgResult:
    step: np.ndarray
    hessian_step: np.ndarray
    iterations: int
    stop_reason: str

    def model_decrease(self, g: np.ndarray) -> float:
        return -float(np.dot(g, self.step) + 0.5 * np.dot(self.step, self.hessian_step))


def _as_matvec(H: Operator) -> Callable[[np.ndarray], np.ndarray]:
    if callable(H) and not hasattr(H, "dot"):
        return H
    return lambda x: np.asarray(H @ x).reshape(-1)


def tcg_subproblem(
    g: np.ndarray,
    H: Operator,
    radius: float,
    kappa: float = 0.1,
    theta: float = 1.0,
    max_inner: Optional[int] = None,
    min_inner: int = 1,
) -> TcgResult:
    """Steihaug truncated CG for min g.s + s.H s / 2 subject to |s| <= radius."""
    if radius <= 0.0:
        raise ValueError("trust-region radius must be positive")
    g = np.asarray(g, dtype=float)
    hess = _as_matvec(H)
    max_inner = g.size if max_inner is None else int(max_inner)

    eta = np.zeros_like(g)
    Heta = np.zeros_like(g)
    r = g.copy()
    norm_r0 = float(np.linalg.norm(r))
    if norm_r0 == 0.0:
        return TcgResult(eta, Heta, 0, REACHED_TARGET_LINEAR)

    z_r = float(np.dot(r, r))
    d_Pd = z_r
    delta = -r
    e_Pe = 0.0
    e_Pd = 0.0
    model_value = 0.0
    stop = MAX_INNER_ITER

    j = 0
    for j in range(max_inner):
        Hdelta = hess(delta)
        d_Hd = float(np.dot(delta, Hdelta))
        alpha = z_r / d_Hd if d_Hd != 0.0 else np.inf
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha * alpha * d_Pd

        if d_Hd <= 0.0 or e_Pe_new >= radius * radius:
            tau = (-e_Pd + np.sqrt(e_Pd * e_Pd + d_Pd * (radius * radius - e_Pe))) / d_Pd
            eta = eta + tau * delta
            Heta = Heta + tau * Hdelta
            stop = NEGATIVE_CURVATURE if d_Hd <= 0.0 else EXCEEDED_TR
            break

        e_Pe = e_Pe_new
        new_eta = eta + alpha * delta
        new_Heta = Heta + alpha * Hdelta
        new_model_value = float(np.dot(new_eta, g) + 0.5 * np.dot(new_eta, new_Heta))
        if new_model_value >= model_value:
            stop = MODEL_INCREASED
            break
        eta, Heta, model_value = new_eta, new_Heta, new_model_value

        r = r + alpha * Hdelta
        norm_r = float(np.linalg.norm(r))
        if j + 1 >= min_inner and norm_r <= norm_r0 * min(norm_r0**theta, kappa):
            stop = REACHED_TARGET_LINEAR if kappa < norm_r0**theta else REACHED_TARGET_SUPERLINEAR
            break

        z_r_old = z_r
        z_r = float(np.dot(r, r))
        beta = z_r / z_r_old
        delta = -r + beta * delta
        e_Pd = beta * (e_Pd + alpha * d_Pd)
        d_Pd = z_r + beta * beta * d_Pd

    return TcgResult(eta, Heta, j + 1, stop)


@dataclass
class IterationRecord:
    iteration: int
    energy: float
    gradient_norm: float
    radius: float
    rho: float = float("nan")
    accepted: bool = False
    inner_iterations: int = 0
    tcg_stop: str = ""


@dataclass
class MinimizeReport:
    converged: bool
    stop_reason: str
    iterations: int
    energy: float
    gradient_norm: float
    records: List[IterationRecord] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        columns = [f for f in IterationRecord.__dataclass_fields__]
        return pd.DataFrame([asdict(record) for record in self.records], columns=columns)


def _scaling(problem: ShellProblem, settings: TrustRegionSettings, free: np.ndarray) -> np.ndarray:
    scale = np.concatenate(
        [
            np.full(3 * problem.n_deformation, settings.deformation_scale),
            np.full(3 * problem.n_rotation, settings.rotation_scale),
        ]
    )
    return scale[free]


def _trial_energy(problem: ShellProblem, config: Configuration) -> float:
    try:
        return problem.energy(config)
    except (CoefficientsTooSpread, NoConvergence) as exc:
        logger.debug("trial point rejected: %s", exc)
        return float("inf")


def minimize(config0: Configuration, problem: ShellProblem, settings: TrustRegionSettings = TrustRegionSettings()):
    """Trust-region minimization from ``config0``; returns (configuration, MinimizeReport)."""
    free = problem.free_mask()
    D = _scaling(problem, settings, free)
    x = config0
    f = problem.energy(x)
    g = problem.gradient_vector(x)[free]
    radius = float(settings.initial_radius)
    records: List[IterationRecord] = []
    eps_reg = np.spacing(1.0) * settings.rho_regularization

    for k in range(settings.max_iterations + 1):
        gnorm = float(np.linalg.norm(g))
        record = IterationRecord(iteration=k, energy=f, gradient_norm=gnorm, radius=radius)
        records.append(record)
        if gnorm <= settings.gradient_tolerance:
            logger.info("iter %3d  f=% .12e  |g|=%.3e  converged", k, f, gnorm)
            return x, MinimizeReport(True, "gradient tolerance", k, f, gnorm, records)
        if k == settings.max_iterations:
            break

        H = problem.hessian(x)[free][:, free]
        Hs = sparse.diags(D) @ H @ sparse.diags(D)
        gs = D * g
        tcg = tcg_subproblem(gs, Hs, radius, settings.cg_kappa, settings.cg_theta, settings.max_inner_iterations)

        step = np.zeros(problem.n_dofs)
        step[free] = D * tcg.step
        trial = retract(x, TangentVector.from_flat(step, problem.n_deformation))
        f_trial = _trial_energy(problem, trial)

        reg = max(1.0, abs(f)) * eps_reg
        rhonum = f - f_trial + reg
        rhoden = tcg.model_decrease(gs) + reg
        model_decreased = rhoden >= 0.0
        rho = rhonum / rhoden if model_decreased and rhoden > 0.0 else float("nan")

        if not model_decreased or not np.isfinite(rho) or rho < settings.eta1:
            radius *= settings.shrink
        elif rho > settings.eta2 and tcg.stop_reason in (NEGATIVE_CURVATURE, EXCEEDED_TR):
            radius = min(settings.grow * radius, settings.max_radius)

        accepted = model_decreased and np.isfinite(rho) and rho >= settings.eta1 and f_trial < f
        record.rho = rho
        record.accepted = bool(accepted)
        record.inner_iterations = tcg.iterations
        record.tcg_stop = tcg.stop_reason
        logger.info(
            "iter %3d  f=% .12e  |g|=%.3e  radius=%.3e  rho=% .3e  %s  inner=%d (%s)",
            k,
            f,
            gnorm,
            radius,
            rho,
            "accept" if accepted else "reject",
            tcg.iterations,
            tcg.stop_reason,
        )
        if accepted:
            x, f = trial, f_trial
            g = problem.gradient_vector(x)[free]
        elif radius < settings.min_radius:
            raise StalledAtNonstationaryPoint(
                f"trust region radius {radius:.3g} below {settings.min_radius:g} with |g| = {gnorm:.3g}"
            )

    gnorm = float(np.linalg.norm(g))
    return x, MinimizeReport(False, "max iterations", settings.max_iterations, f, gnorm, records)


@dataclass
class StepResult:
    step: int
    parameter: float
    configuration: Configuration
    report: MinimizeReport
    problem: ShellProblem


def step_problem(problem: ShellProblem, program: LoadProgram, parameter: float, dirichlet: Sequence[DirichletSpec] = ()) -> ShellProblem:
    if program.drives == "load":
        return problem.with_loads(problem.loads.scaled(parameter * problem.loads.scale))
    return problem.with_boundary_conditions(problem.boundary_conditions_from(dirichlet, parameter))


def run_load_program(
    config0: Configuration,
    problem: ShellProblem,
    program: LoadProgram,
    settings: TrustRegionSettings = TrustRegionSettings(),
    dirichlet: Sequence[DirichletSpec] = (),
    on_step: Optional[Callable[[StepResult], None]] = None,
) -> List[StepResult]:
    """Solve every load step warm-started from the previous solution."""
    completed: List[StepResult] = []
    current = config0
    for k, parameter in enumerate(program.parameters):
        logger.info("load step %d/%d, parameter %g", k + 1, len(program.parameters), parameter)
        try:
            local = step_problem(problem, program, parameter, dirichlet)
            start = apply_dirichlet(local.boundary_conditions, current)
            config, report = minimize(start, local, settings)
            if not report.converged:
                raise NoConvergence(f"no convergence in {settings.max_iterations} iterations, |g| = {report.gradient_norm:.3g}")
        except ShellError as exc:
            raise LoadProgramAborted(k, float(parameter), exc, completed) from exc
        result = StepResult(k, float(parameter), config, report, local)
        completed.append(result)
        if on_step is not None:
            on_step(result)
        current = config
    return completed
