import os
import sys
import unittest

import numpy as np

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
SRC = os.path.join(ROOT, "src")
if SRC not in sys.path:
    sys.path.insert(0, SRC)

from cosseratshell.errors import CoefficientsTooSpread
from cosseratshell.generator import generate_preset
from cosseratshell.gfe import (
    RotationField,
    interp_coefficient_derivative,
    interp_geodesic,
    interp_jacobian,
    interp_projection,
    interpolate,
    max_pairwise_angle,
    spread_triangles,
)
from cosseratshell.mesh import EDGE_VERTICES, REFERENCE_VERTICES, lagrange_points, shape_functions
from cosseratshell.so3 import exp_map, log_map, random_rotation


def _clustered(rng, n, spread=0.3):
    base = random_rotation(rng)
    return [base @ exp_map(spread * rng.uniform(-1.0, 1.0, 3)) for _ in range(n)]


class InterpolationRuleTests(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(21)

    def test_vertex_weights_return_the_coefficient(self):
        coeffs = _clustered(self.rng, 3)
        for kind in (interp_geodesic, interp_projection):
            np.testing.assert_allclose(kind(coeffs, [0.0, 1.0, 0.0]).matrix, coeffs[1].matrix, atol=1e-13)

    def test_two_point_geodesic_is_the_geodesic(self):
        R0, R1 = _clustered(self.rng, 2, spread=0.4)
        v = log_map(R0.matrix.T @ R1.matrix)
        for t in (0.25, 0.5, 0.8):
            expected = R0.matrix @ exp_map(t * v).matrix
            np.testing.assert_allclose(interp_geodesic([R0, R1], [1.0 - t, t]).matrix, expected, atol=1e-12)

    def test_frobenius_distance_gives_projection_rule(self):
        coeffs = _clustered(self.rng, 6)
        weights, _ = shape_functions(2, np.array([0.2, 0.35]))
        np.testing.assert_allclose(
            interp_geodesic(coeffs, weights, distance="frobenius").matrix,
            interp_projection(coeffs, weights).matrix,
            atol=1e-12,
        )

    def test_left_equivariance(self):
        coeffs = _clustered(self.rng, 3)
        Q = random_rotation(self.rng)
        w = [0.2, 0.5, 0.3]
        for rule in (interp_geodesic, interp_projection):
            moved = rule([Q @ c for c in coeffs], w).matrix
            np.testing.assert_allclose(moved, Q.matrix @ rule(coeffs, w).matrix, atol=1e-12)

    def test_spread_coefficients_are_rejected(self):
        coeffs = [exp_map([0.0, 0.0, 0.0]), exp_map([0.0, 0.0, 1.7]), exp_map([0.0, 0.1, 0.0])]
        self.assertGreater(float(max_pairwise_angle(np.stack([c.matrix for c in coeffs]))), 0.5 * np.pi)
        with self.assertRaises(CoefficientsTooSpread):
            interp_geodesic(coeffs, [1.0 / 3.0] * 3)

    def test_projection_rejects_singular_blend(self):
        coeffs = [np.eye(3), np.diag([1.0, -1.0, -1.0])]
        with self.assertRaises(CoefficientsTooSpread):
            interp_projection(coeffs, [0.5, 0.5])


class RotationFieldTests(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(5)
        self.mesh = generate_preset("flat_plate", (2, 2), order=1).mesh
        self.layout = lagrange_points(self.mesh, 2)
        base = random_rotation(rng).matrix
        values = [base @ exp_map(0.3 * rng.uniform(-1.0, 1.0, 3)).matrix for _ in range(self.layout.n_points)]
        self.fields = {kind: RotationField(self.layout, np.stack(values), kind) for kind in ("geodesic", "projection")}

    def test_identity_field(self):
        field = RotationField.identity(self.layout)
        np.testing.assert_allclose(interpolate(field, 3, [0.2, 0.3]).matrix, np.eye(3), atol=1e-15)

    def test_point_derivative_matches_differences(self):
        x = np.array([0.21, 0.33])
        eps = 1e-6
        for field in self.fields.values():
            Q, d1, d2 = interp_jacobian(field, 2, x)
            for alpha, body in enumerate((d1, d2)):
                step = np.zeros(2)
                step[alpha] = eps
                dQ = (interpolate(field, 2, x + step).matrix - interpolate(field, 2, x - step).matrix) / (2.0 * eps)
                np.testing.assert_allclose(Q.matrix @ body.matrix, dQ, atol=1e-7)

    def test_coefficient_derivative_matches_differences(self):
        x = np.array([0.4, 0.25])
        eps = 1e-6
        for field in self.fields.values():
            Q = interpolate(field, 1, x).matrix
            node = 4
            global_id = self.layout.elements[1, node]
            D = interp_coefficient_derivative(field, 1, x, node)
            for j in range(3):
                v = np.zeros(3)
                v[j] = eps
                values = np.array(field.values)
                values[global_id] = values[global_id] @ exp_map(v).matrix
                plus = interpolate(field.with_values(values), 1, x).matrix
                values[global_id] = np.array(field.values)[global_id] @ exp_map(-v).matrix
                minus = interpolate(field.with_values(values), 1, x).matrix
                numeric = log_map(Q.T @ plus) - log_map(Q.T @ minus)
                np.testing.assert_allclose(D[:, j], numeric / (2.0 * eps), atol=1e-7)

    def test_spread_triangles_reports_offenders(self):
        values = np.array(self.fields["geodesic"].values)
        weights, _ = shape_functions(2, np.array([[1.0 / 3.0, 1.0 / 3.0]]))
        local = values[self.layout.elements]
        self.assertEqual(spread_triangles(local, "geodesic", weights).size, 0)
        bad_node = self.layout.elements[0, 0]
        values[bad_node] = values[bad_node] @ exp_map([0.0, 2.8, 0.0]).matrix
        offenders = spread_triangles(values[self.layout.elements], "geodesic", weights)
        owners = np.flatnonzero(np.any(self.layout.elements == bad_node, axis=1))
        np.testing.assert_array_equal(offenders, owners)


def _edge_point(mesh, triangle, k, s):
    """Reference coordinates at fraction ``s`` along local edge ``k``, counted from its lower node id."""
    i, j = EDGE_VERTICES[k]
    if mesh.triangles[triangle, i] > mesh.triangles[triangle, j]:
        i, j = j, i
    return REFERENCE_VERTICES[i] + s * (REFERENCE_VERTICES[j] - REFERENCE_VERTICES[i])


def _glued_edges(preset):
    """(triangle, local edge) pairs of edges whose parameter coordinates differ across the seam."""
    mesh = preset.mesh
    table = mesh.edge_table()
    sides = {}
    for t in range(mesh.n_triangles):
        for k in range(3):
            sides.setdefault(int(table.ids[t, k]), []).append((t, k))
    glued = []
    for pair in sides.values():
        if len(pair) != 2:
            continue
        ends = []
        for t, k in pair:
            local = sorted(EDGE_VERTICES[k], key=lambda v: mesh.triangles[t, v])
            ends.append(preset.analytic.corners[t, local])
        if not np.allclose(ends[0], ends[1]):
            glued.append(pair)
    return glued


class SeamTests(unittest.TestCase):
    def test_field_is_single_valued_across_glued_edges(self):
        rng = np.random.default_rng(27)
        for name, resolution in (("moebius", (2, 8)), ("cylinder", (2, 6))):
            preset = generate_preset(name, resolution, order=2)
            glued = _glued_edges(preset)
            self.assertGreater(len(glued), 0, name)
            for order in (1, 2):
                layout = lagrange_points(preset.mesh, order)
                values = np.stack([exp_map(0.3 * rng.uniform(-1.0, 1.0, 3)).matrix for _ in range(layout.n_points)])
                for kind in ("geodesic", "projection"):
                    field = RotationField(layout, values, kind)
                    for (t1, k1), (t2, k2) in glued:
                        for s in (0.2, 0.5, 0.85):
                            np.testing.assert_allclose(
                                interpolate(field, t1, _edge_point(preset.mesh, t1, k1, s)).matrix,
                                interpolate(field, t2, _edge_point(preset.mesh, t2, k2, s)).matrix,
                                atol=1e-12,
                                err_msg=f"{name} order {order} {kind}",
                            )


if __name__ == "__main__":
    unittest.main()
