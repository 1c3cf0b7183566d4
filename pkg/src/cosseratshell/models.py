from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np


Vector3 = Tuple[float, float, float]

DEFAULT_LAMBDA = 4.4364e4
DEFAULT_MU = 2.7191e4


@dataclass(frozen=True)
class MaterialParams:
    lame_lambda: float = DEFAULT_LAMBDA
    mu: float = DEFAULT_MU
    mu_c: float = 0.1 * DEFAULT_MU
    length_c: float = 5e-4
    b1: float = 1.0
    b2: float = 1.0
    b3: float = 1.0 / 3.0
    thickness: float = 1e-3

    @classmethod
    def with_thickness(cls, thickness: float) -> "MaterialParams":
        return cls(thickness=float(thickness))

    @property
    def is_solvable(self) -> bool:
        return self.mu > 0.0 and self.mu_c > 0.0 and 2.0 * self.lame_lambda + self.mu > 0.0

    @property
    def reduced_lambda(self) -> float:
        """lambda * mu / (lambda + 2 mu), the in-plane trace modulus."""
        return self.lame_lambda * self.mu / (self.lame_lambda + 2.0 * self.mu)


_CONDITION = re.compile(r"^\s*x([123])\s*(>=|<=|>|<)\s*([-+0-9.eE]+|pi|-pi)\s*$")


@dataclass(frozen=True)
class HalfSpace:
    component: int  # 0, 1, 2
    op: str  # ">=" or "<="
    value: float

    def __str__(self) -> str:
        return f"x{self.component + 1} {self.op} {self.value!r}"


@dataclass(frozen=True)
class Selector:
    """Conjunction of half-space predicates on reference coordinates; empty selects everything."""

    conditions: Tuple[HalfSpace, ...] = ()
    tolerance: float = 1e-9

    @classmethod
    def parse(cls, spec: Any) -> "Selector":
        if spec is None or spec == "all":
            return cls()
        items = [spec] if isinstance(spec, str) else list(spec)
        conditions: List[HalfSpace] = []
        for item in items:
            if item == "all":
                continue
            match = _CONDITION.match(str(item))
            if match is None:
                raise ValueError(f"selector condition '{item}' is not of the form 'x3 >= 12'")
            raw = match.group(3)
            value = {"pi": math.pi, "-pi": -math.pi}.get(raw)
            op = match.group(2)[0] + "="
            conditions.append(HalfSpace(int(match.group(1)) - 1, op, float(raw) if value is None else value))
        return cls(tuple(conditions))

    def dump(self) -> Any:
        if not self.conditions:
            return "all"
        return [str(condition) for condition in self.conditions]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        mask = np.ones(pts.shape[0], dtype=bool)
        for cond in self.conditions:
            column = pts[:, cond.component]
            if cond.op == ">=":
                mask &= column >= cond.value - self.tolerance
            else:
                mask &= column <= cond.value + self.tolerance
        return mask


@dataclass(frozen=True)
class VolumeLoad:
    selector: Selector = field(default_factory=Selector)
    value: Vector3 = (0.0, 0.0, 0.0)
    per_volume: bool = False  # multiply by the thickness


@dataclass(frozen=True)
class Traction:
    selector: Selector = field(default_factory=Selector)
    value: Vector3 = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class LoadSpec:
    volume: Tuple[VolumeLoad, ...] = ()
    traction: Tuple[Traction, ...] = ()
    scale: float = 1.0

    @property
    def is_empty(self) -> bool:
        return not self.volume and not self.traction

    def scaled(self, scale: float) -> "LoadSpec":
        return LoadSpec(volume=self.volume, traction=self.traction, scale=float(scale))

    def density(self, points: np.ndarray, thickness: float) -> np.ndarray:
        """Force per unit reference area at reference points (K, 3)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        out = np.zeros_like(pts)
        for piece in self.volume:
            value = np.asarray(piece.value, dtype=float) * (thickness if piece.per_volume else 1.0)
            out[piece.selector.evaluate(pts)] += value
        return self.scale * out

    def traction_density(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        out = np.zeros_like(pts)
        for piece in self.traction:
            out[piece.selector.evaluate(pts)] += np.asarray(piece.value, dtype=float)
        return self.scale * out


@dataclass(frozen=True)
class DirichletSpec:
    """Nodes picked by ``selector`` follow a prescribed motion of the load parameter.

    motion "fixed": stay at m0 with identity microrotation; "rotate": rigid rotation
    about ``axis`` through ``center`` by the parameter angle; "translate": shift by
    parameter times ``axis``.
    """

    selector: Selector = field(default_factory=Selector)
    components: Tuple[bool, bool, bool] = (True, True, True)
    rotation: bool = True
    motion: str = "fixed"
    axis: Vector3 = (0.0, 0.0, 1.0)
    center: Vector3 = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class LoadProgram:
    parameters: Tuple[float, ...] = (1.0,)
    drives: str = "load"  # "load" scales LoadSpec, "dirichlet" feeds DirichletSpec motions

    def __post_init__(self):
        if not self.parameters:
            raise ValueError("load program needs at least one step")
        steps = np.diff(np.asarray(self.parameters, dtype=float))
        if not (np.all(steps >= 0.0) or np.all(steps <= 0.0)):
            raise ValueError("load program parameters must be monotone")
        if self.drives not in ("load", "dirichlet"):
            raise ValueError(f"load program cannot drive '{self.drives}'")


@dataclass
class TrustRegionSettings:
    initial_radius: float = 1.0
    max_radius: float = 1e3
    min_radius: float = 1e-14
    eta1: float = 0.01
    eta2: float = 0.9
    shrink: float = 0.25
    grow: float = 2.5
    gradient_tolerance: float = 1e-8
    max_iterations: int = 200
    cg_kappa: float = 0.1
    cg_theta: float = 1.0
    max_inner_iterations: int = 1000
    deformation_scale: float = 1.0
    rotation_scale: float = 1.0
    rho_regularization: float = 1e3

    def __post_init__(self):
        if not 0.0 < self.eta1 < self.eta2 < 1.0:
            raise ValueError("trust-region thresholds need 0 < eta1 < eta2 < 1")
        if not (0.0 < self.shrink < 1.0 < self.grow):
            raise ValueError("trust-region factors need shrink < 1 < grow")
        if self.initial_radius <= 0.0 or self.max_radius < self.initial_radius:
            raise ValueError("trust-region radii need 0 < initial <= max")


@dataclass(frozen=True)
class ProbeSpec:
    name: str
    kind: str  # "point_deflection" or "ring_height"
    target: Optional[Vector3] = None
    component: int = 3
    selector: Selector = field(default_factory=Selector)


@dataclass
class MeshSpec:
    preset: Optional[str] = None
    resolution: Tuple[int, ...] = ()
    geometry_order: int = 2
    path: Optional[str] = None


@dataclass
class RunConfig:
    name: str = "run"
    mesh: MeshSpec = field(default_factory=MeshSpec)
    geometry: str = "fe"  # "fe" or "analytic"
    deformation_order: int = 2
    rotation_order: int = 1
    interpolation: str = "geodesic"
    variant: str = "main"
    quadrature_order: Optional[int] = None
    material: MaterialParams = field(default_factory=MaterialParams)
    boundary_conditions: List[DirichletSpec] = field(default_factory=list)
    loads: LoadSpec = field(default_factory=LoadSpec)
    program: LoadProgram = field(default_factory=LoadProgram)
    solver: TrustRegionSettings = field(default_factory=TrustRegionSettings)
    probes: List[ProbeSpec] = field(default_factory=list)
    rules: Dict[str, "RuleSettings"] = field(default_factory=dict)
    output: str = "results"
    source_path: str = field(default="", compare=False)


@dataclass
class ExperimentConfig:
    name: str
    config_path: str


@dataclass
class RuleSettings:
    enabled: bool = True
    threshold: Optional[float] = None
    severity: str = "error"


@dataclass
class ValidationIssue:
    rule_id: str
    severity: str
    summary: str
    detail: str


@dataclass
class ValidationResult:
    issues: List[ValidationIssue] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)

    @property
    def error_count(self) -> int:
        return sum(issue.severity == "error" for issue in self.issues)

    @property
    def warning_count(self) -> int:
        return sum(issue.severity == "warning" for issue in self.issues)

    @property
    def is_valid(self) -> bool:
        return self.error_count == 0


def as_vector3(values: Sequence[float]) -> Vector3:
    arr = [float(v) for v in values]
    if len(arr) != 3 or not all(math.isfinite(v) for v in arr):
        raise ValueError(f"expected three finite numbers, got {list(values)!r}")
    return (arr[0], arr[1], arr[2])
