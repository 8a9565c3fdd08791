# Licensed under the Apache License, Version 2.0 (the "License"); you may
# not use this file except in compliance with the License. You may obtain
# a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
# WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
# License for the specific language governing permissions and limitations
# under the License.

import unittest

import mock
import numpy as np

from laguerre_fit import exception
from laguerre_fit import geom2d
from laguerre_fit import objective
from laguerre_fit import synth

SEEDS = [(0.25, 0.5), (0.75, 0.5)]


class TestTargetData(unittest.TestCase):

    def test_shapes(self):
        data = objective.TargetData([0.5, 0.5], [0.25, 0.5, 0.75, 0.5])
        self.assertEqual(2, data.n)
        self.assertEqual((2, 2), data.B.shape)

    def test_mismatch(self):
        self.assertRaises(exception.InvalidInput, objective.TargetData,
                          [0.5, 0.5], [(0.5, 0.5)])

    def test_not_finite(self):
        self.assertRaises(exception.InvalidInput, objective.TargetData,
                          [np.inf], [(0.5, 0.5)])


class TestCompatible(unittest.TestCase):

    def setUp(self):
        self.domain = geom2d.Domain.rectangle(1.0, 1.0)

    def test_compatible(self):
        data = objective.TargetData([0.5, 0.5], SEEDS)
        objective.check_compatible(self.domain, data)

    def test_wrong_total_area(self):
        data = objective.TargetData([0.5, 0.4], SEEDS)
        self.assertRaises(exception.IncompatibleData,
                          objective.check_compatible, self.domain, data)

    def test_wrong_mean_centroid(self):
        data = objective.TargetData([0.5, 0.5], [(0.25, 0.5), (0.8, 0.5)])
        self.assertRaises(exception.IncompatibleData,
                          objective.check_compatible, self.domain, data)

    def test_centroid_outside(self):
        data = objective.TargetData([0.5, 0.5], [(-0.25, 0.5), (1.25, 0.5)])
        self.assertRaises(exception.IncompatibleData,
                          objective.check_compatible, self.domain, data)


class TestObjective(unittest.TestCase):

    def setUp(self):
        self.domain = geom2d.Domain.rectangle(1.0, 1.0)
        self.shifted = objective.TargetData([0.5, 0.5],
                                            [(0.35, 0.5), (0.65, 0.5)])

    def test_zero_at_generating_seeds(self):
        data = objective.TargetData([0.5, 0.5], SEEDS)
        result = objective.Objective(self.domain, data).evaluate(SEEDS)
        self.assertAlmostEqual(0.0, result.H, places=12)
        np.testing.assert_allclose(np.zeros((2, 2)), result.grad_H,
                                   atol=1e-12)
        self.assertAlmostEqual(0.0, result.f, places=20)

    def test_shifted_centroids(self):
        result = objective.Objective(self.domain,
                                     self.shifted).evaluate(SEEDS)
        self.assertAlmostEqual(-0.025, result.H, places=10)
        np.testing.assert_allclose([[0.05, 0.0], [-0.05, 0.0]],
                                   result.grad_H, atol=1e-10)
        self.assertAlmostEqual(0.005, result.f, places=10)
        self.assertAlmostEqual(5.0 / 96.0, result.F, places=10)

    def test_module_functions(self):
        self.assertAlmostEqual(
            -0.025, objective.eval_H(self.domain, SEEDS, self.shifted).H,
            places=10)
        self.assertAlmostEqual(
            0.005, objective.eval_f(self.domain, SEEDS, self.shifted),
            places=10)
        np.testing.assert_allclose(
            [[0.05, 0.0], [-0.05, 0.0]],
            objective.grad_H(self.domain, SEEDS, self.shifted), atol=1e-10)

    def test_H_non_positive_on_random_data(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            _, data, _ = synth.random_voronoi_data(
                self.domain, int(rng.integers(2, 10)),
                rng_seed=int(rng.integers(1000)))
            problem = objective.Objective(self.domain, data)
            seeds = rng.random((data.n, 2))
            self.assertLessEqual(problem.evaluate(seeds).H, 1e-9)

    def test_H_is_homogeneous(self):
        _, data, _ = synth.random_voronoi_data(self.domain, 6, rng_seed=5)
        problem = objective.Objective(self.domain, data)
        seeds = np.random.default_rng(22).random((6, 2))
        first = problem.evaluate(seeds).H
        second = problem.evaluate(2.5 * seeds).H
        self.assertAlmostEqual(2.5 * first, second, places=8)

    def test_grad_H_matches_finite_differences(self):
        _, data, _ = synth.random_voronoi_data(self.domain, 5, rng_seed=7)
        problem = objective.Objective(self.domain, data)
        seeds = np.random.default_rng(23).random((5, 2))
        gradient = problem.grad_H(seeds)
        step = 1e-6
        for index in np.ndindex(*seeds.shape):
            up = seeds.copy()
            down = seeds.copy()
            up[index] += step
            down[index] -= step
            numeric = (problem.evaluate(up).H -
                       problem.evaluate(down).H) / (2 * step)
            self.assertAlmostEqual(gradient[index], numeric, places=5)

    def test_coincident_seeds(self):
        data = objective.TargetData([0.5, 0.5], SEEDS)
        problem = objective.Objective(self.domain, data)
        result = problem.evaluate([(0.5, 0.5), (0.5, 0.5)])
        self.assertIsNone(result.grad_H)
        self.assertIsNone(result.f)
        np.testing.assert_allclose([0.5, 0.5], result.centroids[0])
        self.assertIsNone(result.centroids[1])
        self.assertRaises(exception.CoincidentSeeds, problem.grad_H,
                          [(0.5, 0.5), (0.5, 0.5)])
        self.assertRaises(exception.CoincidentSeeds, problem.eval_f,
                          [(0.5, 0.5), (0.5, 0.5)])

    def test_wrong_seed_count(self):
        data = objective.TargetData([0.5, 0.5], SEEDS)
        problem = objective.Objective(self.domain, data)
        self.assertRaises(exception.InvalidInput, problem.evaluate,
                          [(0.5, 0.5)])

    def test_grad_f_step_too_large(self):
        problem = objective.Objective(self.domain, self.shifted)
        self.assertRaises(exception.StepTooLarge, problem.grad_f,
                          [(0.5, 0.5), (0.6, 0.5)], fd_step=0.1)

    def test_grad_f_non_positive_step(self):
        problem = objective.Objective(self.domain, self.shifted)
        self.assertRaises(exception.InvalidInput, problem.grad_f, SEEDS,
                          fd_step=0.0)

    def test_grad_f_points_uphill(self):
        problem = objective.Objective(self.domain, self.shifted)
        seeds = np.array(SEEDS)
        gradient = problem.grad_f(seeds)
        f0 = problem.eval_f(seeds)
        f1 = problem.eval_f(seeds - 1e-3 * gradient / np.linalg.norm(
            gradient))
        self.assertLess(f1, f0)

    def test_evaluations_counted(self):
        problem = objective.Objective(self.domain, self.shifted)
        problem.evaluate(SEEDS)
        problem.evaluate(SEEDS)
        self.assertEqual(2, problem.evaluations)

    @mock.patch.object(objective.LOG, "warning")
    def test_consistent_formulas_do_not_warn(self, mock_warning):
        problem = objective.Objective(self.domain, self.shifted)
        problem.evaluate(SEEDS)
        self.assertFalse(mock_warning.called)

    @mock.patch.object(objective.LOG, "warning")
    @mock.patch.object(objective.Objective, "_constant", return_value=1.0)
    def test_disagreeing_formulas_warn(self, mock_constant, mock_warning):
        problem = objective.Objective(self.domain, self.shifted)
        result = problem.evaluate(SEEDS)
        self.assertAlmostEqual(1.0 + 5.0 / 96.0, result.H, places=10)
        mock_warning.assert_called_once_with(mock.ANY, result.H, mock.ANY)


class TestHessianGradient(unittest.TestCase):

    def setUp(self):
        self.domain = geom2d.Domain.rectangle(1.0, 1.0)
        _, self.data, _ = synth.random_voronoi_data(self.domain, 4,
                                                    rng_seed=31)
        self.seeds = np.random.default_rng(32).random((4, 2))

    def test_matches_componentwise_gradient(self):
        problem = objective.Objective(self.domain, self.data)
        expected = problem.grad_f(self.seeds)
        gradient = problem.grad_f_hessian(self.seeds)
        self.assertLess(np.linalg.norm(gradient - expected),
                        1e-3 * np.linalg.norm(expected))

    def test_known_gradient_is_used(self):
        problem = objective.Objective(self.domain, self.data)
        gradient = problem.grad_H(self.seeds)
        before = problem.evaluations
        problem.grad_f_hessian(self.seeds, gradient=gradient)
        self.assertEqual(2, problem.evaluations - before)

    def test_restores_warm_start(self):
        problem = objective.Objective(self.domain, self.data)
        result = problem.evaluate(self.seeds)
        anchor = problem._weights
        problem.grad_f_hessian(self.seeds, gradient=result.grad_H)
        self.assertIs(anchor, problem._weights)

    def test_zero_at_critical_point(self):
        data = objective.TargetData([0.5, 0.5], SEEDS)
        problem = objective.Objective(self.domain, data)
        np.testing.assert_array_equal(
            np.zeros((2, 2)),
            problem.grad_f_hessian(SEEDS, gradient=np.zeros((2, 2))))

    def test_step_too_large(self):
        data = objective.TargetData([0.5, 0.5], SEEDS)
        problem = objective.Objective(self.domain, data)
        # Moves the first seed onto the second.
        gradient = np.array([[1.0, 0.0], [0.0, 0.0]])
        self.assertRaises(exception.StepTooLarge, problem.grad_f_hessian,
                          SEEDS, fd_step=0.5, gradient=gradient)

    def test_non_positive_step(self):
        problem = objective.Objective(self.domain, self.data)
        self.assertRaises(exception.InvalidInput, problem.grad_f_hessian,
                          self.seeds, fd_step=-1.0)


class TestHProperties(unittest.TestCase):

    def setUp(self):
        self.domain = geom2d.Domain.rectangle(1.0, 1.0)
        _, self.data, _ = synth.random_voronoi_data(self.domain, 6,
                                                    rng_seed=41)
        self.problem = objective.Objective(self.domain, self.data)
        self.rng = np.random.default_rng(42)

    def H(self, seeds):
        return self.problem.evaluate(seeds).H

    def test_midpoint_concavity(self):
        for _ in range(100):
            X, Y = self.rng.random((2, 6, 2))
            self.assertGreaterEqual(self.H(0.5 * (X + Y)),
                                    0.5 * (self.H(X) + self.H(Y)) - 1e-9)

    def test_superlinearity(self):
        for _ in range(100):
            X, Y = self.rng.random((2, 6, 2))
            self.assertGreaterEqual(self.H(X + Y),
                                    self.H(X) + self.H(Y) - 1e-9)

    def test_negative_scaling_reverses_homogeneity(self):
        for lam in (-0.5, -1.0, -2.0):
            X = self.rng.random((6, 2))
            self.assertLessEqual(self.H(lam * X), lam * self.H(X) + 1e-9)

    def test_homogeneity_with_translation(self):
        for lam, shift in ((2.5, (0.3, -0.2)), (0.4, (-1.0, 2.0))):
            X = self.rng.random((6, 2))
            expected = lam * self.H(X)
            self.assertAlmostEqual(
                expected, self.H(lam * X + np.array(shift)),
                delta=1e-9 * abs(expected) + 1e-14)

    def test_zero_when_all_seeds_coincide(self):
        for point in ((0.3, 0.7), (2.0, -1.0)):
            self.assertAlmostEqual(0.0, self.H([point] * 6), delta=1e-10)

    def test_f_is_invariant_under_similarity(self):
        X = self.rng.random((6, 2))
        expected = self.problem.eval_f(X)
        moved = self.problem.eval_f(1.7 * X + np.array([0.2, -0.4]))
        np.testing.assert_allclose(expected, moved, rtol=1e-5)

    def test_f_is_squared_gradient_norm(self):
        result = self.problem.evaluate(self.rng.random((6, 2)))
        np.testing.assert_allclose(np.sum(result.grad_H ** 2), result.f,
                                   rtol=1e-12)

    def test_grad_H_matches_finite_differences(self):
        step = 1e-6
        for _ in range(20):
            n = int(self.rng.integers(2, 11))
            _, data, _ = synth.random_voronoi_data(
                self.domain, n, rng_seed=int(self.rng.integers(1000)))
            problem = objective.Objective(self.domain, data)
            seeds = self.rng.random((n, 2))
            gradient = problem.grad_H(seeds)
            numeric = np.zeros_like(seeds)
            for index in np.ndindex(*seeds.shape):
                up = seeds.copy()
                down = seeds.copy()
                up[index] += step
                down[index] -= step
                numeric[index] = (problem.evaluate(up).H -
                                  problem.evaluate(down).H) / (2 * step)
            self.assertLess(np.linalg.norm(numeric - gradient),
                            1e-5 * np.linalg.norm(gradient))
