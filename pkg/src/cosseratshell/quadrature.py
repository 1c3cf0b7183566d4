from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .errors import UnsupportedOrder


MAX_ORDER = 10


@dataclass(frozen=True)
class QuadratureRule:
    order: int
    points: np.ndarray  # (n, 2) reference coordinates
    weights: np.ndarray  # (n,), sum 1/2

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])


def _orbit3(a: float) -> List[Tuple[float, float, float]]:
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


def _orbit6(a: float, b: float) -> List[Tuple[float, float, float]]:
    c = 1.0 - a - b
    return sorted(set(itertools.permutations((a, b, c))))


def _from_barycentric(groups) -> Tuple[np.ndarray, np.ndarray]:
    points: List[Tuple[float, float]] = []
    weights: List[float] = []
    for weight, orbit in groups:
        for lam in orbit:
            points.append((lam[1], lam[2]))
            weights.append(0.5 * weight)
    return np.asarray(points, dtype=float), np.asarray(weights, dtype=float)


# weights normalized to 1 over the triangle
_SYMMETRIC_RULES = {
    1: [(1.0, [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)])],
    2: [(1.0 / 3.0, _orbit3(1.0 / 6.0))],
    4: [
        (0.22338158967801146570, _orbit3(0.44594849091596488632)),
        (0.10995174365532186764, _orbit3(0.09157621350977074346)),
    ],
    5: [
        (9.0 / 40.0, [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]),
        ((155.0 + math.sqrt(15.0)) / 1200.0, _orbit3((6.0 + math.sqrt(15.0)) / 21.0)),
        ((155.0 - math.sqrt(15.0)) / 1200.0, _orbit3((6.0 - math.sqrt(15.0)) / 21.0)),
    ],
    6: [
        (0.11678627572637936603, _orbit3(0.24928674517091042129)),
        (0.05084490637020681692, _orbit3(0.06308901449150222834)),
        (0.08285107561837357519, _orbit6(0.05314504984481694735, 0.31035245103378440542)),
    ],
}


def _collapsed_symmetric_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    n = int(math.ceil((order + 2) / 2.0))
    t, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (t + 1.0)
    ws = 0.5 * w
    points: List[Tuple[float, float]] = []
    weights: List[float] = []
    for u, wu in zip(s, ws):
        for v, wv in zip(s, ws):
            x1, x2 = u, v * (1.0 - u)
            lam = (1.0 - x1 - x2, x1, x2)
            for perm in itertools.permutations(range(3)):
                points.append((lam[perm[1]], lam[perm[2]]))
                weights.append(wu * wv * (1.0 - u) / 6.0)
    return np.asarray(points, dtype=float), np.asarray(weights, dtype=float)


@lru_cache(maxsize=None)
def quadrature_rule(order: int) -> QuadratureRule:
    """Symmetric rule on the reference triangle, exact up to ``order``, positive weights."""
    order = int(order)
    if order < 0 or order > MAX_ORDER:
        raise UnsupportedOrder(f"no triangle quadrature of order {order} (supported 0..{MAX_ORDER})")
    key = max(order, 1)
    if key == 3:
        key = 4  # the classic degree-3 rule has a negative weight
    if key in _SYMMETRIC_RULES:
        points, weights = _from_barycentric(_SYMMETRIC_RULES[key])
    else:
        points, weights = _collapsed_symmetric_rule(key)
    weights = weights * (0.5 / math.fsum(weights))
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(order=order, points=points, weights=weights)


@lru_cache(maxsize=None)
def line_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [0, 1]."""
    n = max(1, int(math.ceil((int(order) + 1) / 2.0)))
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w
