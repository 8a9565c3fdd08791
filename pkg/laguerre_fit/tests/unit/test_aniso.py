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

import os
import unittest

import numpy as np

from laguerre_fit import aniso
from laguerre_fit import exception
from laguerre_fit import fit
from laguerre_fit import geom2d
from laguerre_fit import ingest
from laguerre_fit import objective

SLOW = os.getenv("LAGUERRE_FIT_SLOW_TESTS") == "1"

SEEDS = [(0.25, 0.5), (0.75, 0.5)]


class TestAnisotropyMatrices(unittest.TestCase):

    def test_identity(self):
        matrices = aniso.AnisotropyMatrices.identity(3)
        self.assertEqual(3, len(matrices))
        np.testing.assert_allclose([2.0, 8.0, 1.0], matrices.norm_sq(
            np.array([(1.0, 1.0), (2.0, -2.0), (0.0, 1.0)])))

    def test_from_axes(self):
        matrices = aniso.anisotropy_from_axes([(1.0, 4.0), (1.0, 4.0)],
                                              [0.0, np.pi / 2])
        np.testing.assert_allclose(np.diag([1.0, 4.0]), matrices.A[0],
                                   atol=1e-14)
        np.testing.assert_allclose(np.diag([4.0, 1.0]), matrices.A[1],
                                   atol=1e-14)

    def test_apply(self):
        matrices = aniso.AnisotropyMatrices([[[2.0, 1.0], [1.0, 3.0]]])
        np.testing.assert_allclose([[3.0, 4.0]],
                                   matrices.apply(np.array([[1.0, 1.0]])))
        self.assertEqual([(2.0, 1.0, 3.0)], matrices.to_rows())

    def test_single_matrix(self):
        self.assertEqual(1, len(aniso.AnisotropyMatrices(np.eye(2))))

    def test_not_symmetric(self):
        self.assertRaises(exception.InvalidInput, aniso.AnisotropyMatrices,
                          [[[1.0, 0.5], [0.0, 1.0]]])

    def test_not_positive_definite(self):
        self.assertRaises(exception.InvalidInput, aniso.AnisotropyMatrices,
                          [[[1.0, 2.0], [2.0, 1.0]]])

    def test_bad_shape(self):
        self.assertRaises(exception.InvalidInput, aniso.AnisotropyMatrices,
                          [[1.0, 0.0, 1.0]])

    def test_count_mismatch(self):
        self.assertRaises(exception.InvalidInput, aniso.as_anisotropy,
                          [np.eye(2)], 2)


class TestRaster(unittest.TestCase):

    def setUp(self):
        self.domain = geom2d.Domain.rectangle(1.0, 1.0)

    def test_grid(self):
        grid = aniso.raster_grid(geom2d.Domain.rectangle(2.0, 1.0), 16)
        self.assertEqual(0.125, grid.pixel_width)
        self.assertEqual(1.0 / 16, grid.pixel_height)
        self.assertEqual(256, len(grid.centers))
        self.assertAlmostEqual(2.0, grid.total_area)
        # Row 0 is the top of the image.
        self.assertEqual([0.0625, 1.0 - 1.0 / 32], grid.centers[0].tolist())

    def test_grid_masks_outside_pixels(self):
        grid = aniso.raster_grid(geom2d.Domain([(0, 0), (1, 0), (0, 1)]),
                                 64)
        self.assertFalse(grid.mask[0, -1])
        self.assertTrue(grid.mask[-1, 0])
        self.assertAlmostEqual(0.5, grid.total_area, delta=64 / 4096.0)

    def test_resolution_too_low(self):
        self.assertRaises(exception.InvalidInput, aniso.raster_grid,
                          self.domain, 8)

    def test_symmetric_pair(self):
        raster = aniso.raster_diagram_aniso(self.domain, SEEDS, [0, 0],
                                            resolution=64)
        np.testing.assert_allclose([0.5, 0.5], raster.areas)
        np.testing.assert_allclose([[0.25, 0.5], [0.75, 0.5]],
                                   raster.centroids)
        self.assertEqual(0, raster.labels[0, 0])
        self.assertEqual(1, raster.labels[0, -1])
        self.assertAlmostEqual(2 * 5.0 / 96.0, raster.transport_cost,
                               delta=1e-3)

    def test_ties_go_to_lowest_index(self):
        raster = aniso.raster_diagram_aniso(
            self.domain, [(0.5, 0.5), (0.5, 0.5)], [0, 0], resolution=16)
        self.assertTrue(np.all(raster.labels == 0))
        self.assertEqual([1], raster.empty_cells())
        self.assertTrue(np.all(np.isnan(raster.centroids[1])))

    def test_anisotropy_stretches_cells(self):
        seeds = [(0.5, 0.25), (0.5, 0.75)]
        iso = aniso.raster_diagram_aniso(self.domain, seeds, [0, 0],
                                         resolution=32)
        stretched = aniso.raster_diagram_aniso(
            self.domain, seeds, [0, 0],
            anisotropy=[np.diag([1.0, 4.0]), np.eye(2)], resolution=32)
        self.assertLess(stretched.areas[0], iso.areas[0])

    def test_triangle_labels_are_masked(self):
        domain = geom2d.Domain([(0, 0), (1, 0), (0, 1)])
        raster = aniso.raster_diagram_aniso(domain, [(0.2, 0.2)], [0],
                                            resolution=32)
        self.assertEqual(ingest.NO_GRAIN, raster.labels[0, -1])
        self.assertAlmostEqual(raster.grid.total_area, raster.areas[0])


class TestSolveWeights(unittest.TestCase):

    def setUp(self):
        self.domain = geom2d.Domain.rectangle(1.0, 1.0)

    def test_symmetric_pair(self):
        report = aniso.solve_weights_aniso(self.domain, SEEDS, [0.5, 0.5],
                                           resolution=64)
        self.assertEqual([0.0, 0.0], report.w_star.tolist())
        self.assertEqual(0, report.iterations)

    def test_single_cell(self):
        report = aniso.solve_weights_aniso(self.domain, [(0.3, 0.3)], [1.0],
                                           resolution=16)
        self.assertEqual([0.0], report.w_star.tolist())
        self.assertTrue(np.all(report.raster.labels == 0))

    def test_unequal_areas(self):
        targets = np.array([0.75, 0.25])
        report = aniso.solve_weights_aniso(self.domain, SEEDS, targets,
                                           resolution=64)
        strip = 4.0 * np.sqrt(targets) / 64
        self.assertTrue(np.all(np.abs(report.raster.areas - targets) <=
                               strip))
        self.assertEqual(0.0, report.w_star[-1])
        self.assertAlmostEqual(0.25, report.w_star[0], delta=3.0 / 64)

    def test_anisotropic_random(self):
        rng = np.random.default_rng(61)
        seeds = rng.random((5, 2))
        targets = np.full(5, 0.2)
        anisotropy = aniso.anisotropy_from_axes(
            rng.uniform(0.5, 2.0, (5, 2)), rng.uniform(0, np.pi, 5))
        report = aniso.solve_weights_aniso(self.domain, seeds, targets,
                                           anisotropy, resolution=64)
        strip = 4.0 * np.sqrt(targets) / 64
        self.assertTrue(np.all(np.abs(report.raster.areas - targets) <=
                               strip))

    def test_resolution_too_coarse(self):
        self.assertRaises(exception.ResolutionTooCoarse,
                          aniso.solve_weights_aniso, self.domain, SEEDS,
                          [0.999, 0.001], resolution=16)

    def test_coincident_seeds(self):
        self.assertRaises(exception.CoincidentSeeds,
                          aniso.solve_weights_aniso, self.domain,
                          [(0.5, 0.5), (0.5, 0.5)], [0.5, 0.5],
                          resolution=16)


class TestObjective(unittest.TestCase):

    def setUp(self):
        self.domain = geom2d.Domain.rectangle(1.0, 1.0)

    def test_compatible_gradient_vanishes(self):
        data = objective.TargetData([0.5, 0.5], SEEDS)
        _, grad = aniso.eval_grad_H_aniso(self.domain, SEEDS, data,
                                          resolution=64)
        np.testing.assert_allclose(np.zeros((2, 2)), grad, atol=1e-12)

    def test_identity_matches_isotropic(self):
        data = objective.TargetData([0.5, 0.5], [(0.35, 0.5), (0.65, 0.5)])
        H, grad = aniso.eval_grad_H_aniso(self.domain, SEEDS, data,
                                          resolution=64)
        exact = objective.eval_H(self.domain, SEEDS, data)
        np.testing.assert_allclose(exact.grad_H, grad, atol=2.0 / 64 * 0.5)
        # H_A leaves out the constant -1/2 integral of |x|**2.
        self.assertAlmostEqual(exact.H + self.domain.second_moment / 2, H,
                               delta=1e-3)

    def test_single_cell_recovery(self):
        data = objective.TargetData([1.0], [(0.5, 0.5)])
        seeds, raster, trace = aniso.recover_aniso(
            self.domain, data, rng_seed=1, resolution=16)
        self.assertEqual((1, 2), seeds.shape)
        self.assertTrue(np.all(raster.labels == 0))
        self.assertEqual(fit.Termination.CONVERGED, trace.termination)

    def test_label_grid(self):
        raster = aniso.raster_diagram_aniso(self.domain, SEEDS, [0, 0],
                                            resolution=32)
        grid = aniso.raster_to_label_grid(raster)
        self.assertEqual(32, grid.width)
        self.assertEqual(1.0 / 32, grid.pixel_size)
        _, data = ingest.grid_to_targets(grid)
        np.testing.assert_allclose(raster.areas, data.v)
        np.testing.assert_allclose(raster.centroids, data.B)

    def test_label_grid_needs_square_pixels(self):
        raster = aniso.raster_diagram_aniso(
            geom2d.Domain.rectangle(2.0, 1.0), SEEDS, [0, 0], resolution=16)
        self.assertRaises(exception.InvalidInput, aniso.raster_to_label_grid,
                          raster)

    @unittest.skipUnless(SLOW, "set LAGUERRE_FIT_SLOW_TESTS=1")
    def test_recovers_anisotropic_diagram(self):
        rng = np.random.default_rng(62)
        seeds = rng.random((4, 2))
        anisotropy = aniso.anisotropy_from_axes(
            rng.uniform(0.5, 2.0, (4, 2)), rng.uniform(0, np.pi, 4))
        source = aniso.raster_diagram_aniso(self.domain, seeds,
                                            np.zeros(4), anisotropy,
                                            resolution=128)
        _, data = ingest.grid_to_targets(aniso.raster_to_label_grid(source))
        _, raster, _ = aniso.recover_aniso(self.domain, data, anisotropy,
                                           rng_seed=63, resolution=128)
        agreement = np.mean(raster.labels == source.labels)
        self.assertGreater(agreement, 0.98)
