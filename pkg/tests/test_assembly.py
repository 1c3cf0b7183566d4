import math
import os
import sys
import unittest

import numpy as np

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
SRC = os.path.join(ROOT, "src")
if SRC not in sys.path:
    sys.path.insert(0, SRC)

from cosseratshell.assembly import (
    BoundaryConditions,
    ShellProblem,
    TangentVector,
    apply_dirichlet,
    default_quadrature_order,
    external_potential,
    gradient,
    hessian,
    mask,
    total_energy,
)
from cosseratshell.errors import CoefficientsTooSpread, EmptySelection, UnknownNode
from cosseratshell.generator import generate_preset
from cosseratshell.geometry import FEGeometry
from cosseratshell.mesh import ParamMesh
from cosseratshell.models import DirichletSpec, LoadSpec, MaterialParams, Selector, Traction, VolumeLoad
from cosseratshell.so3 import exp_map, random_rotation
from cosseratshell.solver import retract


def _problem(name="flat_plate", resolution=(2, 2), geometry_order=1, thickness=0.1, **kwargs):
    mesh = generate_preset(name, resolution, order=geometry_order).mesh
    return ShellProblem(mesh, FEGeometry(mesh), MaterialParams(thickness=thickness), **kwargs)


def _perturbed(problem, rng, scale=0.01, angle=0.1):
    config = problem.reference_configuration()
    deformation = config.deformation + scale * rng.standard_normal(config.deformation.shape)
    rotations = np.stack([exp_map(angle * rng.uniform(-1.0, 1.0, 3)).matrix for _ in range(problem.n_rotation)])
    return config.with_values(deformation, rotations)


def _smooth_configuration(problem):
    x = problem.deformation_points
    deformation = x + 0.01 * np.column_stack([np.sin(x[:, 2] / 3.0), np.cos(x[:, 0] / 5.0), 0.1 * x[:, 1]])
    r = problem.rotation_points
    rotations = np.stack([exp_map(0.05 * np.array([p[0] / 10.0, p[1] / 10.0, p[2] / 15.0])).matrix for p in r])
    return problem.reference_configuration().with_values(deformation, rotations)


class ReferenceStateTests(unittest.TestCase):
    def test_default_quadrature_order(self):
        self.assertEqual(default_quadrature_order(2, 1, 2), 5)
        self.assertEqual(default_quadrature_order(1, 1, 1), 3)

    def test_reference_configuration_is_stress_free(self):
        problem = _problem("cylinder", (2, 6), geometry_order=2, deformation_order=2, rotation_order=1)
        config = problem.reference_configuration()
        self.assertLess(abs(problem.internal_energy(config)), 1e-18)
        self.assertLess(np.max(np.abs(problem.gradient_vector(config))), 1e-9)

    def test_gradient_at_reference_is_minus_load(self):
        load = LoadSpec(volume=(VolumeLoad(value=(0.0, 0.0, 3.0)),))
        problem = _problem(loads=load)
        g = problem.gradient_vector(problem.reference_configuration())
        np.testing.assert_allclose(g[: 3 * problem.n_deformation], -problem.load_vector.ravel(), atol=1e-9)


class LoadTests(unittest.TestCase):
    def test_volume_load_integrates_to_total_force(self):
        problem = _problem(resolution=(3, 2), thickness=0.2, loads=LoadSpec(volume=(VolumeLoad(value=(0.0, 0.0, 2.0), per_volume=True),)))
        np.testing.assert_allclose(problem.load_vector.sum(axis=0), [0.0, 0.0, 0.4], atol=1e-14)

    def test_selected_volume_load(self):
        load = LoadSpec(volume=(VolumeLoad(selector=Selector.parse("x1 <= 0.5"), value=(1.0, 0.0, 0.0)),))
        problem = _problem(resolution=(2, 2), loads=load)
        np.testing.assert_allclose(problem.load_vector.sum(axis=0), [0.5, 0.0, 0.0], atol=1e-14)

    def test_traction_on_edge(self):
        load = LoadSpec(traction=(Traction(selector=Selector.parse("x1 >= 1"), value=(1.0, 0.0, 0.0)),))
        problem = _problem(resolution=(2, 3), loads=load)
        np.testing.assert_allclose(problem.load_vector.sum(axis=0), [1.0, 0.0, 0.0], atol=1e-14)

    def test_scaled_load_and_potential(self):
        load = LoadSpec(volume=(VolumeLoad(value=(0.0, 0.0, 1.0)),))
        problem = _problem(loads=load)
        scaled = problem.with_loads(load.scaled(2.5))
        config = problem.reference_configuration().rigidly_moved(np.eye(3), (0.0, 0.0, 1.0))
        self.assertAlmostEqual(problem.external_potential(config), 1.0, places=12)
        np.testing.assert_allclose(scaled.load_vector, 2.5 * problem.load_vector, atol=1e-15)

    def test_potential_vanishes_at_reference(self):
        load = LoadSpec(volume=(VolumeLoad(value=(0.0, 0.0, 1.0)),))
        problem = _problem("half_sphere", (1,), geometry_order=2, deformation_order=2, rotation_order=1, loads=load)
        reference = problem.reference_configuration()
        self.assertGreater(np.abs(problem.load_vector).max(), 0.0)
        self.assertEqual(problem.external_potential(reference), 0.0)
        self.assertLess(abs(problem.energy(reference)), 1e-12)

    def test_half_sphere_area(self):
        problem = _problem("half_sphere", (2,), geometry_order=2, deformation_order=2, rotation_order=1)
        self.assertAlmostEqual(problem.total_area / (2.0 * math.pi), 1.0, places=2)


class DerivativeTests(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(17)
        self.problem = _problem(resolution=(2, 1), deformation_order=2, rotation_order=1)
        self.config = _perturbed(self.problem, self.rng)
        n = self.problem.n_dofs
        self.direction = TangentVector.from_flat(self.rng.standard_normal(n), self.problem.n_deformation)

    def test_gradient_matches_central_differences(self):
        eps = 1e-6
        plus = self.problem.energy(retract(self.config, self.direction, eps))
        minus = self.problem.energy(retract(self.config, self.direction, -eps))
        numeric = (plus - minus) / (2.0 * eps)
        analytic = float(np.dot(self.problem.gradient_vector(self.config), self.direction.flat()))
        self.assertAlmostEqual(numeric / analytic, 1.0, places=6)

    def test_hessian_matches_gradient_differences(self):
        eps = 1e-6
        step = TangentVector(eps * self.direction.deformation, eps * self.direction.rotation)
        back = TangentVector(-eps * self.direction.deformation, -eps * self.direction.rotation)
        numeric = (self.problem.pullback_gradient(self.config, step).flat() - self.problem.pullback_gradient(self.config, back).flat()) / (2.0 * eps)
        H = self.problem.hessian(self.config)
        self.assertLess(abs(H - H.T).max(), 1e-12 * abs(H).max())
        analytic = H @ self.direction.flat()
        np.testing.assert_allclose(numeric, analytic, rtol=1e-5, atol=1e-6 * np.abs(analytic).max())

    def test_projection_rule_derivatives(self):
        problem = _problem(resolution=(1, 1), deformation_order=2, rotation_order=2, interpolation="projection")
        config = _perturbed(problem, self.rng)
        v = TangentVector.from_flat(self.rng.standard_normal(problem.n_dofs), problem.n_deformation)
        eps = 1e-6
        numeric = (problem.energy(retract(config, v, eps)) - problem.energy(retract(config, v, -eps))) / (2.0 * eps)
        analytic = float(np.dot(problem.gradient_vector(config), v.flat()))
        self.assertAlmostEqual(numeric / analytic, 1.0, places=6)


class InvarianceTests(unittest.TestCase):
    def test_rigid_motion(self):
        rng = np.random.default_rng(9)
        problem = _problem(resolution=(2, 2), deformation_order=2, rotation_order=2)
        config = _perturbed(problem, rng)
        moved = config.rigidly_moved(random_rotation(rng), (1.0, -2.0, 0.5))
        self.assertAlmostEqual(problem.energy(moved) / problem.energy(config), 1.0, places=10)

    def test_triangle_orientation(self):
        preset = generate_preset("cylinder", (2, 6), order=2)
        flipped = ParamMesh(preset.mesh.positions, preset.mesh.triangles[:, [0, 2, 1, 3, 5, 4]], geometry_order=2)
        energies = []
        for mesh in (preset.mesh, flipped):
            problem = ShellProblem(mesh, FEGeometry(mesh), MaterialParams(thickness=0.1), deformation_order=2, rotation_order=1)
            energies.append(problem.energy(_smooth_configuration(problem)))
        self.assertGreater(energies[0], 0.0)
        self.assertAlmostEqual(energies[1] / energies[0], 1.0, places=9)


class BoundaryConditionTests(unittest.TestCase):
    def test_clamped_nodes_follow_motion(self):
        problem = _problem(resolution=(2, 2))
        spec = DirichletSpec(selector=Selector.parse("x1 >= 1"), motion="translate", axis=(0.0, 0.0, 1.0))
        bc = problem.boundary_conditions_from([spec], parameter=0.3)
        config = apply_dirichlet(bc, problem.reference_configuration())
        picked = problem.deformation_points[:, 0] >= 1.0 - 1e-9
        np.testing.assert_allclose(config.deformation[picked, 2], 0.3)
        np.testing.assert_allclose(config.deformation[~picked], problem.deformation_points[~picked])
        free = problem.with_boundary_conditions(bc).free_mask().reshape(-1, 3)
        self.assertFalse(free[: problem.n_deformation][picked].any())

    def test_rotating_clamp(self):
        problem = _problem("cylinder", (2, 6), geometry_order=2)
        spec = DirichletSpec(selector=Selector.parse("x3 >= 15"), components=(True, True, False), motion="rotate")
        bc = problem.boundary_conditions_from([spec], parameter=0.5)
        config = apply_dirichlet(bc, problem.reference_configuration())
        top = problem.deformation_points[:, 2] >= 15.0 - 1e-9
        expected = problem.deformation_points[top] @ exp_map([0.0, 0.0, 0.5]).matrix.T
        np.testing.assert_allclose(config.deformation[top], expected, atol=1e-12)
        np.testing.assert_allclose(config.rotations[bc.rotation_nodes], np.broadcast_to(exp_map([0.0, 0.0, 0.5]).matrix, (len(bc.rotation_nodes), 3, 3)))

    def test_empty_selection(self):
        problem = _problem()
        with self.assertRaises(EmptySelection):
            problem.boundary_conditions_from([DirichletSpec(selector=Selector.parse("x3 >= 5"))])

    def test_unknown_node(self):
        problem = _problem()
        bc = BoundaryConditions(deformation_nodes=[999], deformation_mask=[[True, True, True]], deformation_targets=[[0.0, 0.0, 0.0]])
        with self.assertRaises(UnknownNode):
            problem.with_boundary_conditions(bc)

    def test_spread_rotations_are_reported(self):
        problem = _problem()
        config = problem.reference_configuration()
        rotations = np.array(config.rotations)
        rotations[0] = exp_map([0.0, 2.8, 0.0]).matrix
        with self.assertRaises(CoefficientsTooSpread):
            problem.energy(config.with_values(rotations=rotations))


class EntryPointTests(unittest.TestCase):
    def test_module_functions_match_problem_methods(self):
        rng = np.random.default_rng(23)
        problem = _problem(loads=LoadSpec(volume=(VolumeLoad(value=(0.0, 1.0, 2.0)),)))
        config = _perturbed(problem, rng)
        self.assertEqual(total_energy(config, problem), problem.energy(config))
        self.assertAlmostEqual(
            problem.internal_energy(config) - total_energy(config, problem), external_potential(config, problem), places=12
        )
        np.testing.assert_array_equal(gradient(config, problem).flat(), problem.gradient_vector(config))
        self.assertEqual(abs(hessian(config, problem) - problem.hessian(config)).max(), 0.0)

    def test_mask_zeroes_constrained_entries(self):
        problem = _problem()
        bc = problem.boundary_conditions_from([DirichletSpec(selector=Selector.parse("x1 <= 0"), components=(True, False, True))])
        masked = mask(bc, TangentVector.from_flat(np.ones(problem.n_dofs), problem.n_deformation))
        np.testing.assert_array_equal(masked.deformation[bc.deformation_nodes], np.tile([0.0, 1.0, 0.0], (len(bc.deformation_nodes), 1)))
        np.testing.assert_array_equal(masked.rotation[bc.rotation_nodes], 0.0)
        np.testing.assert_array_equal(masked.flat() != 0.0, problem.with_boundary_conditions(bc).free_mask())


if __name__ == "__main__":
    unittest.main()
