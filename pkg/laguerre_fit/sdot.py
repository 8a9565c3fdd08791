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

"""Semi-discrete optimal transport from the uniform measure on a domain.

The weights of a Laguerre diagram whose cells have prescribed areas are the
maximiser of the concave dual function

    K(w) = sum_i int_{Lag_i} (|x - x_i|**2 - w_i) dx + sum_i w_i v_i

whose gradient is ``v - m(w)``. It is maximised by damped Newton, keeping
every cell area above a positive floor.
"""

import dataclasses
import logging

import numpy as np
import scipy.linalg
import scipy.sparse

from laguerre_fit import exception
from laguerre_fit import geom2d

LOG = logging.getLogger(__name__)

DEFAULT_TOL_PERCENT = 0.1

MAX_NEWTON_STEPS = 100

MAX_HALVINGS = 30

# Area residuals within this many ulps of the domain area are round-off.
ROUNDOFF_ULPS = 1e3

# Fraction of the domain bounding box that rescaled seeds occupy.
_RESCALE_FILL = 0.9


@dataclasses.dataclass
class DualReport:
    """Result of a dual solve."""

    w_star: np.ndarray
    iterations: int
    max_rel_area_error: float
    dual_value: float
    diagram: geom2d.LaguerreDiagram


def check_target_areas(domain, areas, tol=1e-9):
    """Validate target areas: positive and summing to the domain area."""
    areas = np.array(areas, dtype=float).reshape(-1)
    if not np.all(np.isfinite(areas)):
        raise exception.InvalidInput("Target areas must be finite")
    if np.any(areas <= 0):
        raise exception.IncompatibleData("Target areas must be positive")
    if abs(np.sum(areas) - domain.area) > tol * domain.area:
        raise exception.IncompatibleData(
            "Target areas sum to %r, the domain area is %r" %
            (float(np.sum(areas)), float(domain.area)))
    return areas


def _check_distinct(seeds):
    if not geom2d.seeds_distinct(seeds):
        raise exception.CoincidentSeeds(
            "The dual Hessian is undefined for coincident seeds")


def roundoff_floor(domain, n):
    """Residual norm of the cell areas below which Newton cannot improve.

    Clipping snaps vertices within ``domain.tolerance``, so each area
    carries an error of that order on top of the floating point one.
    """
    return (ROUNDOFF_ULPS * np.finfo(float).eps * domain.area +
            n * domain.tolerance)


def transport_cost(diagram):
    """Sum over cells of the integral of |x - x_i|**2."""
    return float(sum(geom2d.cell_transport_cost(cell, seed)
                     for cell, seed in zip(diagram.cells, diagram.seeds)))


def _dual_value(diagram, areas):
    weights = diagram.weights
    return (transport_cost(diagram) - np.dot(weights, diagram.areas) +
            np.dot(weights, areas))


def _hessian(diagram):
    n = diagram.n
    rows, cols, values = [], [], []
    for i, j, length in diagram.edges:
        distance = np.linalg.norm(diagram.seeds[i] - diagram.seeds[j])
        entry = length / (2.0 * distance)
        rows += [i, j]
        cols += [j, i]
        values += [entry, entry]
    off = scipy.sparse.coo_matrix((values, (rows, cols)), shape=(n, n))
    diagonal = -np.asarray(off.sum(axis=1)).reshape(-1)
    return (off + scipy.sparse.diags(diagonal)).tocsr()


def dual_eval(domain, seeds, weights, areas, diagram=None):
    """Value, gradient and sparse Hessian of the dual function."""
    seeds = geom2d.as_seeds(seeds)
    areas = check_target_areas(domain, areas)
    _check_distinct(seeds)
    if diagram is None:
        diagram = geom2d.build_laguerre(domain, seeds, weights)
    return (_dual_value(diagram, areas), areas - diagram.areas,
            _hessian(diagram))


def initial_weights(domain, seeds, areas=None):
    """Weights for which every cell of ``seeds`` is non-empty.

    The seeds are mapped into the domain by a uniform dilation and
    translation; the Voronoi diagram of the mapped seeds is then expressed
    with the original seeds by adjusting the weights.
    """
    seeds = geom2d.as_seeds(seeds)
    n = len(seeds)
    if n == 1:
        return np.zeros(1)
    lo, hi = seeds.min(axis=0), seeds.max(axis=0)
    extent = hi - lo
    box_lo = np.array(domain.bounds[:2])
    box_hi = np.array(domain.bounds[2:])
    ratios = [(box_hi[k] - box_lo[k]) / extent[k]
              for k in range(2) if extent[k] > 0]
    lam = _RESCALE_FILL * min(ratios) if ratios else 1.0
    shift = 0.5 * (box_lo + box_hi) - lam * 0.5 * (lo + hi)
    mapped = lam * seeds + shift
    _, weights = geom2d.rescale_generators(mapped, np.zeros(n), 1.0 / lam,
                                           -shift / lam)
    weights = geom2d.normalize_weights(weights)
    diagram = geom2d.build_laguerre(domain, seeds, weights)
    if diagram.empty_cells():
        LOG.warning("Rescaled initial weights leave %d empty cells; "
                    "falling back to zero weights",
                    len(diagram.empty_cells()))
        return np.zeros(n)
    return weights


def _max_rel_error(diagram, areas):
    return float(np.max(100.0 * np.abs(diagram.areas - areas) / areas))


def _newton_direction(hessian, gradient):
    """Solve ``hessian . d = -gradient`` with the last weight pinned."""
    direction = np.zeros_like(gradient)
    reduced = -hessian[:-1, :-1].toarray()
    try:
        direction[:-1] = scipy.linalg.solve(reduced, gradient[:-1],
                                            assume_a="pos")
    except (np.linalg.LinAlgError, ValueError):
        LOG.debug("Reduced Hessian is singular, using least squares")
        direction[:-1] = np.linalg.lstsq(reduced, gradient[:-1],
                                         rcond=None)[0]
    return direction


def solve_weights(domain, seeds, areas, tol_percent=DEFAULT_TOL_PERCENT,
                  w0=None, max_steps=MAX_NEWTON_STEPS):
    """Find normalised weights whose cells have the target areas.

    :param w0: optional warm start; ignored when it leaves a cell empty.
    :returns: a :class:`DualReport`.
    """
    seeds = geom2d.as_seeds(seeds)
    areas = check_target_areas(domain, areas)
    if len(areas) != len(seeds):
        raise exception.InvalidInput(
            "Got %d target areas for %d seeds" % (len(areas), len(seeds)))
    _check_distinct(seeds)

    diagram = None
    if w0 is not None:
        weights = geom2d.normalize_weights(
            geom2d.as_weights(w0, len(seeds)))
        diagram = geom2d.build_laguerre(domain, seeds, weights)
        if diagram.empty_cells():
            LOG.debug("Warm start leaves empty cells, rescaling instead")
            diagram = None
    if diagram is None:
        weights = initial_weights(domain, seeds, areas)
        diagram = geom2d.build_laguerre(domain, seeds, weights)
        if diagram.empty_cells():
            raise exception.DegenerateStart(
                "Cells %s are empty at the initial weights" %
                diagram.empty_cells())

    floor = 0.5 * min(np.min(areas), np.min(diagram.areas))
    roundoff = roundoff_floor(domain, len(seeds))
    for step in range(max_steps + 1):
        error = _max_rel_error(diagram, areas)
        if error < tol_percent:
            LOG.debug("Dual solve converged after %d steps, error %.3g%%",
                      step, error)
            return DualReport(diagram.weights, step, error,
                              _dual_value(diagram, areas), diagram)
        gradient = areas - diagram.areas
        norm = np.linalg.norm(gradient)
        if step == max_steps:
            break
        direction = _newton_direction(_hessian(diagram), gradient)
        tau = 1.0
        for _ in range(MAX_HALVINGS):
            trial = geom2d.build_laguerre(domain, seeds,
                                          diagram.weights + tau * direction)
            if (np.min(trial.areas) >= floor and
                    np.linalg.norm(areas - trial.areas) <=
                    (1.0 - 0.5 * tau) * norm):
                break
            tau *= 0.5
        else:
            if norm <= roundoff:
                break
            raise exception.MaxIterationsExceeded(
                "Damped Newton line search failed at step %d (error %.3g%%)"
                % (step, error))
        LOG.debug("Newton step %d: step length %g, error %.3g%%",
                  step, tau, error)
        diagram = trial
    if norm <= roundoff:
        LOG.debug("Dual solve stopped at round-off after %d steps, "
                  "error %.3g%%", step, error)
        return DualReport(diagram.weights, step, error,
                          _dual_value(diagram, areas), diagram)
    raise exception.MaxIterationsExceeded(
        "Dual solve did not reach %g%% in %d steps (error %.3g%%)" %
        (tol_percent, max_steps, error))


def wasserstein_sq(domain, seeds, areas, tol_percent=DEFAULT_TOL_PERCENT,
                   w0=None):
    """Squared Wasserstein distance from the domain to the point masses."""
    report = solve_weights(domain, seeds, areas, tol_percent=tol_percent,
                           w0=w0)
    return transport_cost(report.diagram)
