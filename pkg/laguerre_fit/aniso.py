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

"""Anisotropic Laguerre diagrams on a raster.

Cell i collects the points where ``|x - x_i|_{A_i}**2 - w_i`` is smallest,
with ``|y|_A**2 = y . A y``. Cells are sampled at pixel centres of a
``g x g`` grid over the bounding box of the domain; pixels whose centre
lies outside the domain are masked.
"""

import dataclasses
import logging

import numpy as np
import scipy.linalg

from laguerre_fit import exception
from laguerre_fit import fit
from laguerre_fit import geom2d
from laguerre_fit import ingest
from laguerre_fit import objective
from laguerre_fit import sdot
from laguerre_fit import synth

LOG = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 512

MIN_RESOLUTION = 16

DEFAULT_TOL_PERCENT = 0.1

MAX_NEWTON_STEPS = 100

MAX_HALVINGS = 30

# Iterations between refreshes of the finite difference Hessian.
HESSIAN_REFRESH = 5

# Cells smaller than this many pixels cannot be resolved.
MIN_CELL_PIXELS = 4

# Default ftol of anisotropic recovery, relative to the starting H.
RASTER_FTOL = 1e-8

_PIXEL_CHUNK = 1 << 16

_MAX_STEP_DOUBLINGS = 30


class AnisotropyMatrices(object):
    """Symmetric positive definite 2x2 matrices, one per cell."""

    def __init__(self, matrices):
        A = np.array(matrices, dtype=float)
        if A.ndim == 2 and A.shape == (2, 2):
            A = A[None]
        if A.ndim != 3 or A.shape[1:] != (2, 2):
            raise exception.InvalidInput(
                "Anisotropy must be a list of 2x2 matrices")
        if not np.all(np.isfinite(A)):
            raise exception.InvalidInput("Anisotropy must be finite")
        asymmetric = np.flatnonzero(np.abs(A[:, 0, 1] - A[:, 1, 0]) > 1e-12)
        if asymmetric.size:
            raise exception.InvalidInput(
                "Anisotropy matrices %s are not symmetric" %
                asymmetric.tolist())
        A = 0.5 * (A + np.transpose(A, (0, 2, 1)))
        eigenvalues = np.linalg.eigvalsh(A)
        indefinite = np.flatnonzero(eigenvalues[:, 0] <= 1e-10)
        if indefinite.size:
            raise exception.InvalidInput(
                "Anisotropy matrices %s are not positive definite" %
                indefinite.tolist())
        self.A = A

    @classmethod
    def identity(cls, n):
        return cls(np.tile(np.eye(2), (n, 1, 1)))

    def __len__(self):
        return len(self.A)

    def norm_sq(self, offsets):
        """Squared A_i norms of offsets shaped ``(..., n, 2)``."""
        dx, dy = offsets[..., 0], offsets[..., 1]
        return (self.A[:, 0, 0] * dx * dx + 2.0 * self.A[:, 0, 1] * dx * dy +
                self.A[:, 1, 1] * dy * dy)

    def apply(self, vectors):
        """``A_i v_i`` for an (n, 2) array."""
        return np.einsum("nij,nj->ni", self.A, vectors)

    def to_rows(self):
        return [(a[0, 0], a[0, 1], a[1, 1]) for a in self.A]


def as_anisotropy(matrices, n):
    if matrices is None:
        return AnisotropyMatrices.identity(n)
    if not isinstance(matrices, AnisotropyMatrices):
        matrices = AnisotropyMatrices(matrices)
    if len(matrices) != n:
        raise exception.InvalidInput(
            "Got %d anisotropy matrices for %d seeds" % (len(matrices), n))
    return matrices


def anisotropy_from_axes(scales, angles):
    """``R(theta) diag(s1, s2) R(theta)^T`` for each row of scales."""
    scales = np.asarray(scales, dtype=float).reshape(-1, 2)
    angles = np.asarray(angles, dtype=float).reshape(-1)
    cos, sin = np.cos(angles), np.sin(angles)
    rotation = np.stack([np.stack([cos, -sin], axis=-1),
                         np.stack([sin, cos], axis=-1)], axis=-2)
    diagonal = np.einsum("ni,ij->nij", scales, np.eye(2))
    return AnisotropyMatrices(
        rotation @ diagonal @ np.transpose(rotation, (0, 2, 1)))


@dataclasses.dataclass(frozen=True)
class RasterGrid:
    """Pixel centres of a ``resolution x resolution`` grid over a domain."""

    domain: geom2d.Domain
    resolution: int
    pixel_width: float
    pixel_height: float
    mask: np.ndarray
    centers: np.ndarray

    @property
    def pixel_area(self):
        return self.pixel_width * self.pixel_height

    @property
    def total_area(self):
        return len(self.centers) * self.pixel_area


def raster_grid(domain, resolution=DEFAULT_RESOLUTION):
    if resolution < MIN_RESOLUTION:
        raise exception.InvalidInput(
            "Resolution must be at least %d, got %d" %
            (MIN_RESOLUTION, resolution))
    x0, y0, x1, y1 = domain.bounds
    width = (x1 - x0) / resolution
    height = (y1 - y0) / resolution
    xs = x0 + (np.arange(resolution) + 0.5) * width
    ys = y1 - (np.arange(resolution) + 0.5) * height
    points = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    if domain.is_rectangle:
        inside = np.ones(len(points), dtype=bool)
    else:
        inside = domain.contains_points(points)
    return RasterGrid(domain, resolution, width, height,
                      inside.reshape(resolution, resolution), points[inside])


@dataclasses.dataclass
class RasterDiagram:
    """An anisotropic Laguerre diagram sampled on a raster.

    ``labels`` is a ``(g, g)`` image with row 0 at the top and -1 on
    masked pixels. ``centroids`` has NaN rows for empty cells.
    """

    grid: RasterGrid
    seeds: np.ndarray
    weights: np.ndarray
    anisotropy: AnisotropyMatrices
    labels: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray
    transport_cost: float

    @property
    def n(self):
        return len(self.seeds)

    def empty_cells(self):
        return np.flatnonzero(self.areas <= 0).tolist()


def _assign(centers, seeds, weights, anisotropy):
    """Cell index and anisotropic squared distance of every centre."""
    labels = np.empty(len(centers), dtype=int)
    cost = np.empty(len(centers))
    for start in range(0, len(centers), _PIXEL_CHUNK):
        block = centers[start:start + _PIXEL_CHUNK]
        distance = anisotropy.norm_sq(block[:, None, :] - seeds[None, :, :])
        chosen = np.argmin(distance - weights, axis=1)
        labels[start:start + len(block)] = chosen
        cost[start:start + len(block)] = distance[np.arange(len(block)),
                                                  chosen]
    return labels, cost


def _rasterize(grid, seeds, weights, anisotropy):
    n = len(seeds)
    labels, cost = _assign(grid.centers, seeds, weights, anisotropy)
    counts = np.bincount(labels, minlength=n).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        centroids = np.column_stack([
            np.bincount(labels, weights=grid.centers[:, k], minlength=n) /
            counts for k in range(2)])
    image = np.full(grid.mask.shape, ingest.NO_GRAIN, dtype=int)
    image[grid.mask] = labels
    return RasterDiagram(grid, seeds, weights, anisotropy, image,
                         counts * grid.pixel_area, centroids,
                         float(np.sum(cost) * grid.pixel_area))


def raster_diagram_aniso(domain, seeds, weights, anisotropy=None,
                         resolution=DEFAULT_RESOLUTION, grid=None):
    """Label every pixel by its anisotropic power cell, ties to the lowest
    index."""
    seeds = geom2d.as_seeds(seeds)
    weights = geom2d.as_weights(weights, len(seeds))
    anisotropy = as_anisotropy(anisotropy, len(seeds))
    grid = grid or raster_grid(domain, resolution)
    return _rasterize(grid, seeds, weights, anisotropy)


@dataclasses.dataclass
class AnisoDualReport:
    w_star: np.ndarray
    iterations: int
    max_rel_area_error: float
    raster: RasterDiagram


def _fill_empty(grid, seeds, weights, anisotropy):
    """Raise weights of empty cells until each owns a pixel."""
    weights = weights.copy()
    for _ in range(len(seeds)):
        raster = _rasterize(grid, seeds, weights, anisotropy)
        empty = raster.empty_cells()
        if not empty:
            return weights
        for i in empty:
            nearest = np.argmin(np.sum((grid.centers - seeds[i]) ** 2,
                                       axis=1))
            point = grid.centers[nearest]
            power = anisotropy.norm_sq(point[None, :] - seeds) - weights
            others = np.delete(power, i)
            weights[i] += power[i] - np.min(others) + grid.pixel_area
    raise exception.DegenerateStart(
        "Cells %s stay empty at every start weight" %
        _rasterize(grid, seeds, weights, anisotropy).empty_cells())


class _HessianCache(object):
    """Finite difference Jacobian of raster areas with respect to weights."""

    def __init__(self, grid, seeds, anisotropy):
        self.grid = grid
        self.seeds = seeds
        self.anisotropy = anisotropy
        spread = np.max(np.linalg.eigvalsh(anisotropy.A))
        self.steps = np.full(len(seeds), spread * grid.domain.diameter *
                             max(grid.pixel_width, grid.pixel_height))
        self.matrix = None
        self.age = 0

    def refresh(self, weights, areas):
        n = len(weights)
        jacobian = np.zeros((n, n))
        for j in range(n):
            for _ in range(_MAX_STEP_DOUBLINGS):
                trial = weights.copy()
                trial[j] += self.steps[j]
                moved = _rasterize(self.grid, self.seeds, trial,
                                   self.anisotropy).areas
                column = (moved - areas) / self.steps[j]
                if np.any(column != 0):
                    break
                self.steps[j] *= 2.0
            jacobian[:, j] = column
        self.matrix = 0.5 * (jacobian + jacobian.T)
        self.age = 0

    def direction(self, gradient):
        direction = np.zeros_like(gradient)
        reduced = self.matrix[:-1, :-1]
        try:
            direction[:-1] = scipy.linalg.solve(reduced, gradient[:-1],
                                                assume_a="sym")
        except (np.linalg.LinAlgError, ValueError):
            direction[:-1] = np.linalg.lstsq(reduced, gradient[:-1],
                                             rcond=None)[0]
        return direction


def solve_weights_aniso(domain, seeds, areas, anisotropy=None,
                        resolution=DEFAULT_RESOLUTION,
                        tol_percent=DEFAULT_TOL_PERCENT, w0=None, grid=None,
                        max_steps=MAX_NEWTON_STEPS):
    """Weights whose raster cells have the target areas.

    Targets are rescaled to the unmasked raster area. A cell meets the
    tolerance when its area error is within ``tol_percent`` of its target
    or within one pixel.

    :returns: an :class:`AnisoDualReport`.
    """
    seeds = geom2d.as_seeds(seeds)
    n = len(seeds)
    areas = sdot.check_target_areas(domain, areas)
    if len(areas) != n:
        raise exception.InvalidInput(
            "Got %d target areas for %d seeds" % (len(areas), n))
    if not geom2d.seeds_distinct(seeds):
        raise exception.CoincidentSeeds("Seeds must be distinct")
    anisotropy = as_anisotropy(anisotropy, n)
    grid = grid or raster_grid(domain, resolution)
    pixel = grid.pixel_area
    targets = areas * (grid.total_area / np.sum(areas))
    if np.min(targets) < MIN_CELL_PIXELS * pixel:
        raise exception.ResolutionTooCoarse(
            "Smallest target area %g is below %d pixels at resolution %d" %
            (np.min(targets), MIN_CELL_PIXELS, grid.resolution))
    allowed = np.maximum(tol_percent / 100.0 * targets, pixel)
    strip = 4.0 * np.sqrt(targets) * max(grid.pixel_width,
                                         grid.pixel_height)

    if w0 is None:
        weights = np.zeros(n)
    else:
        weights = geom2d.normalize_weights(geom2d.as_weights(w0, n))
    weights = _fill_empty(grid, seeds, weights, anisotropy)
    raster = _rasterize(grid, seeds, weights, anisotropy)
    hessian = _HessianCache(grid, seeds, anisotropy)

    def report(step):
        error = np.abs(raster.areas - targets)
        return AnisoDualReport(geom2d.normalize_weights(raster.weights), step,
                               float(np.max(100.0 * error / targets)),
                               raster)

    for step in range(max_steps + 1):
        error = np.abs(raster.areas - targets)
        if np.all(error <= allowed * (1.0 + 1e-9)):
            LOG.debug("Raster dual solve converged after %d steps", step)
            return report(step)
        if step == max_steps:
            break
        if hessian.matrix is None or hessian.age >= HESSIAN_REFRESH:
            hessian.refresh(raster.weights, raster.areas)
        gradient = targets - raster.areas
        direction = hessian.direction(gradient)
        norm = np.linalg.norm(gradient)
        tau = 1.0
        for _ in range(MAX_HALVINGS):
            trial = _rasterize(grid, seeds, raster.weights + tau * direction,
                               anisotropy)
            if (not trial.empty_cells() and
                    np.linalg.norm(targets - trial.areas) < norm):
                break
            tau *= 0.5
        else:
            if hessian.age > 0:
                hessian.matrix = None
                continue
            if np.all(error <= strip):
                LOG.warning("Raster dual solve stalled at step %d within one "
                            "pixel strip of the targets", step)
                return report(step)
            raise exception.MaxIterationsExceeded(
                "Raster dual solve stalled at step %d, max area error %g" %
                (step, float(np.max(error))))
        raster = trial
        hessian.age += 1
    raise exception.MaxIterationsExceeded(
        "Raster dual solve did not converge in %d steps" % max_steps)


@dataclasses.dataclass
class AnisoEval:
    H: float
    grad: np.ndarray
    dual: AnisoDualReport


class AnisoObjective(object):
    """H_A and its gradient, warm-starting each raster dual solve.

    ``H_A = 1/2 T_A - 1/2 sum v_i |x_i|_{A_i}**2 + sum v_i x_i . A_i b_i``
    omits the constant of the isotropic H, so it does not vanish on
    compatible data.
    """

    def __init__(self, domain, data, anisotropy=None,
                 resolution=DEFAULT_RESOLUTION,
                 tol_percent=DEFAULT_TOL_PERCENT):
        objective.check_compatible(domain, data)
        self.domain = domain
        self.data = data
        self.anisotropy = as_anisotropy(anisotropy, data.n)
        self.grid = raster_grid(domain, resolution)
        self.tol_percent = tol_percent
        self._weights = None

    def evaluate(self, seeds):
        seeds = geom2d.as_seeds(seeds)
        report = solve_weights_aniso(
            self.domain, seeds, self.data.v, self.anisotropy,
            tol_percent=self.tol_percent, w0=self._weights, grid=self.grid)
        self._weights = report.w_star
        v, B = self.data.v, self.data.B
        A = self.anisotropy
        H = (0.5 * report.raster.transport_cost -
             0.5 * np.dot(v, A.norm_sq(seeds)) +
             np.dot(v, np.einsum("ij,ij->i", seeds, A.apply(B))))
        grad = v[:, None] * A.apply(B - report.raster.centroids)
        return AnisoEval(float(H), grad, report)


def eval_grad_H_aniso(domain, seeds, data, anisotropy=None,
                      resolution=DEFAULT_RESOLUTION):
    """``(H_A, grad H_A)`` with the gradient ``v_i A_i (b_i - c_i)``."""
    result = AnisoObjective(domain, data, anisotropy, resolution).evaluate(
        seeds)
    return result.H, result.grad


def recover_aniso(domain, data, anisotropy=None, options=None, X_init=None,
                  rng_seed=None, resolution=DEFAULT_RESOLUTION):
    """Maximise H_A under the ball and separation constraints.

    :returns: ``(seeds, RasterDiagram, OptimizeTrace)``.
    """
    options = options or fit.default_options(domain, data.n)
    problem = AnisoObjective(domain, data, anisotropy, resolution)
    if X_init is None:
        X_init = synth.sample_uniform(domain, data.n,
                                      synth.make_rng(rng_seed))
    seeds = geom2d.as_seeds(X_init)
    if data.n == 1:
        result = problem.evaluate(seeds)
        trace = fit.OptimizeTrace(
            records=[{"iteration": 0, "objective": result.H,
                      "penalty": 0.0}],
            termination=fit.Termination.CONVERGED)
        return seeds, result.dual.raster, trace

    evaluate = fit.EvaluationCache(
        lambda x: problem.evaluate(x.reshape(-1, 2)))
    if options.ftol is None:
        options = dataclasses.replace(options, ftol=RASTER_FTOL)
    scale = max(abs(evaluate(seeds.reshape(-1)).H),
                fit.MIN_H_SCALE * domain.area * domain.diameter ** 2)

    def fun(x):
        result = evaluate(x)
        return result.H, result.grad.reshape(-1)

    def monitor(x):
        current = x.reshape(-1, 2)
        return {"f": float(np.sum(evaluate(x).grad ** 2)),
                "min_pair_dist_over_delta":
                    geom2d.min_pairwise_distance(current) / options.delta,
                "active_constraints":
                    len(fit.active_pairs(current, options.delta))}

    constraints = [fit.ball_constraint(domain.centroid, options.radius),
                   fit.separation_constraint(data.n, options.delta)]
    x, trace = fit.constrained_optimize(fun, constraints, seeds.reshape(-1),
                                        options, maximize=True,
                                        monitor=monitor, scale=scale)
    LOG.info("Anisotropic recovery finished (%s) after %d iterations",
             trace.termination.value, trace.iterations)
    return x.reshape(-1, 2), evaluate(x).dual.raster, trace


def raster_to_label_grid(raster):
    """The label grid of a raster diagram, for :mod:`laguerre_fit.ingest`."""
    grid = raster.grid
    if not np.isclose(grid.pixel_width, grid.pixel_height, rtol=1e-12):
        raise exception.InvalidInput(
            "Label grids need square pixels, got %g x %g" %
            (grid.pixel_width, grid.pixel_height))
    x0, y0 = grid.domain.bounds[:2]
    return ingest.LabelGrid(grid.resolution, grid.resolution,
                            raster.labels.copy(), grid.pixel_width,
                            (x0, y0), list(range(raster.n)))
