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

"""The concave recovery function H and the centroid error f = |grad H|**2.

For target data ``(v, B)`` and seeds ``X``,

    H(X) = F(X) - 1/2 sum v_i |x_i|**2 + sum v_i x_i . b_i
           - 1/2 int |x|**2 dx

where ``F`` is half the squared Wasserstein distance between the domain and
the point masses ``v_i`` at ``x_i``. Its gradient is ``v_i (b_i - c_i)``
with ``c_i`` the centroid of the i-th cell of the optimal diagram.
"""

import dataclasses
import logging

import numpy as np

from laguerre_fit import exception
from laguerre_fit import geom2d
from laguerre_fit import sdot

LOG = logging.getLogger(__name__)

# Inner optimal transport tolerance, in percent of each target area.
DEFAULT_OT_TOL_PERCENT = 1e-6

# Finite difference step for grad f, relative to the domain diameter.
DEFAULT_FD_STEP = 1e-5


@dataclasses.dataclass
class TargetData:
    """Target areas ``v`` and centroids ``B`` of n cells."""

    v: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.v = np.array(self.v, dtype=float).reshape(-1)
        self.B = np.array(self.B, dtype=float).reshape(-1, 2)
        if len(self.v) != len(self.B):
            raise exception.InvalidInput(
                "Got %d areas and %d centroids" % (len(self.v), len(self.B)))
        if not (np.all(np.isfinite(self.v)) and
                np.all(np.isfinite(self.B))):
            raise exception.InvalidInput("Target data must be finite")

    @property
    def n(self):
        return len(self.v)


def check_compatible(domain, data, tol=1e-9):
    """Raise IncompatibleData unless the data are compatible with a domain.

    Areas must be positive and sum to the domain area, the area-weighted
    mean centroid must be the domain centroid and every centroid must lie
    in the domain.
    """
    sdot.check_target_areas(domain, data.v, tol=tol)
    moment = data.v @ data.B
    expected = domain.area * domain.centroid
    if np.linalg.norm(moment - expected) > tol * domain.scale:
        raise exception.IncompatibleData(
            "Area-weighted centroids sum to %s, expected %s" %
            (moment.tolist(), expected.tolist()))
    outside = [i for i, b in enumerate(data.B) if not domain.contains(b)]
    if outside:
        raise exception.IncompatibleData(
            "Target centroids %s lie outside the domain" % outside)


@dataclasses.dataclass
class ObjectiveEval:
    """H and its derived quantities at one seed configuration.

    ``grad_H`` and ``f`` are None when seeds coincide.
    """

    H: float
    grad_H: np.ndarray
    f: float
    centroids: list
    dual: sdot.DualReport
    F: float
    areas: np.ndarray


def _merge_coincident(seeds, tol):
    """Map each seed to the lowest-indexed seed at the same position."""
    representative = np.arange(len(seeds))
    for i in range(len(seeds)):
        for j in range(i):
            if (representative[j] == j and
                    np.linalg.norm(seeds[i] - seeds[j]) <= tol):
                representative[i] = j
                break
    return representative


class Objective(object):
    """H, grad H, f and grad f for fixed domain and target data.

    The dual solve of each evaluation is warm-started from the weights of
    the previous one.
    """

    def __init__(self, domain, data, ot_tol_percent=DEFAULT_OT_TOL_PERCENT):
        check_compatible(domain, data)
        self.domain = domain
        self.data = data
        self.ot_tol_percent = ot_tol_percent
        self.evaluations = 0
        self._weights = None

    def _constant(self, seeds):
        v, B = self.data.v, self.data.B
        return (-0.5 * np.dot(v, np.einsum("ij,ij->i", seeds, seeds)) +
                np.dot(v, np.einsum("ij,ij->i", seeds, B)) -
                0.5 * self.domain.second_moment)

    def evaluate(self, seeds, warm_start=True):
        seeds = geom2d.as_seeds(seeds)
        if len(seeds) != self.data.n:
            raise exception.InvalidInput(
                "Got %d seeds for %d target cells" %
                (len(seeds), self.data.n))
        self.evaluations += 1
        if not geom2d.seeds_distinct(seeds):
            return self._evaluate_merged(seeds)
        report = sdot.solve_weights(
            self.domain, seeds, self.data.v,
            tol_percent=self.ot_tol_percent,
            w0=self._weights if warm_start else None)
        if warm_start:
            self._weights = report.w_star
        diagram = report.diagram
        # The dual value is second order accurate in the area residual.
        F = 0.5 * report.dual_value
        H = F + self._constant(seeds)
        centroids = diagram.centroid_array()
        v, B = self.data.v, self.data.B
        grad = v[:, None] * (B - centroids)
        H_centroid = float(np.sum(grad * seeds))
        slack = (1e-9 * self.domain.area * self.domain.diameter ** 2 +
                 np.sum(np.abs(v - diagram.areas) *
                        np.abs(np.einsum("ij,ij->i", centroids, seeds) -
                               0.5 * np.einsum("ij,ij->i", seeds, seeds))) +
                 0.5 * np.sum(np.abs(v - diagram.areas) *
                              np.abs(diagram.weights)))
        if abs(H - H_centroid) > slack:
            LOG.warning("H formulas disagree: %r (dual) vs %r "
                        "(centroids)", H, H_centroid)
        return ObjectiveEval(H=float(H), grad_H=grad,
                             f=float(np.sum(grad ** 2)),
                             centroids=list(diagram.centroids), dual=report,
                             F=float(F), areas=diagram.areas)

    def _evaluate_merged(self, seeds):
        """H at coincident seeds, merging their masses into one point."""
        representative = _merge_coincident(
            seeds, geom2d.CLIP_TOL * self.domain.diameter)
        groups = np.unique(representative)
        merged_areas = np.array(
            [np.sum(self.data.v[representative == g]) for g in groups])
        centroids = [None] * len(seeds)
        if len(groups) == 1:
            F = 0.5 * geom2d.cell_transport_cost(self.domain.boundary,
                                                 seeds[groups[0]])
            centroids[groups[0]] = self.domain.centroid
            report = None
            areas = np.zeros(len(seeds))
            areas[groups[0]] = self.domain.area
        else:
            report = sdot.solve_weights(self.domain, seeds[groups],
                                        merged_areas,
                                        tol_percent=self.ot_tol_percent)
            F = 0.5 * report.dual_value
            areas = np.zeros(len(seeds))
            for k, g in enumerate(groups):
                centroids[g] = report.diagram.centroids[k]
                areas[g] = report.diagram.areas[k]
        H = F + self._constant(seeds)
        return ObjectiveEval(H=float(H), grad_H=None, f=None,
                             centroids=centroids, dual=report, F=float(F),
                             areas=areas)

    def eval_H(self, seeds):
        return self.evaluate(seeds)

    def grad_H(self, seeds):
        result = self.evaluate(seeds)
        if result.grad_H is None:
            raise exception.CoincidentSeeds(
                "H is not differentiable at coincident seeds")
        return result.grad_H

    def eval_f(self, seeds):
        result = self.evaluate(seeds)
        if result.f is None:
            raise exception.CoincidentSeeds(
                "Centroids are undefined at coincident seeds")
        return result.f

    def grad_f(self, seeds, fd_step=None):
        """Central finite difference gradient of f."""
        seeds = geom2d.as_seeds(seeds)
        if fd_step is None:
            fd_step = DEFAULT_FD_STEP * self.domain.diameter
        if fd_step <= 0:
            raise exception.InvalidInput("The FD step must be positive")
        self.eval_f(seeds)
        anchor = self._weights
        gradient = np.zeros_like(seeds)
        try:
            for index in np.ndindex(*seeds.shape):
                values = []
                for sign in (1.0, -1.0):
                    trial = seeds.copy()
                    trial[index] += sign * fd_step
                    if not geom2d.seeds_distinct(trial):
                        raise exception.StepTooLarge(
                            "FD step %g makes seed %d coincide with another"
                            % (fd_step, index[0]))
                    self._weights = anchor
                    values.append(self.eval_f(trial))
                gradient[index] = (values[0] - values[1]) / (2.0 * fd_step)
        finally:
            self._weights = anchor
        return gradient

    def grad_f_hessian(self, seeds, fd_step=None, gradient=None):
        """grad f = 2 D2H grad H, differencing grad H along grad H.

        Costs two dual solves where :meth:`grad_f` costs 4n.

        :param gradient: grad H at ``seeds`` when already known.
        """
        seeds = geom2d.as_seeds(seeds)
        if fd_step is None:
            fd_step = DEFAULT_FD_STEP * self.domain.diameter
        if fd_step <= 0:
            raise exception.InvalidInput("The FD step must be positive")
        if gradient is None:
            gradient = self.grad_H(seeds)
        norm = np.linalg.norm(gradient)
        if norm == 0.0:
            return np.zeros_like(seeds)
        direction = gradient / norm
        anchor = self._weights
        values = []
        try:
            for sign in (1.0, -1.0):
                trial = seeds + sign * fd_step * direction
                if not geom2d.seeds_distinct(trial):
                    raise exception.StepTooLarge(
                        "FD step %g along grad H makes seeds coincide" %
                        fd_step)
                self._weights = anchor
                values.append(self.grad_H(trial))
        finally:
            self._weights = anchor
        return norm * (values[0] - values[1]) / fd_step


def eval_H(domain, seeds, data, ot_tol_percent=DEFAULT_OT_TOL_PERCENT):
    return Objective(domain, data, ot_tol_percent).eval_H(seeds)


def grad_H(domain, seeds, data, ot_tol_percent=DEFAULT_OT_TOL_PERCENT):
    return Objective(domain, data, ot_tol_percent).grad_H(seeds)


def eval_f(domain, seeds, data, ot_tol_percent=DEFAULT_OT_TOL_PERCENT):
    return Objective(domain, data, ot_tol_percent).eval_f(seeds)


def grad_f(domain, seeds, data, fd_step=None,
           ot_tol_percent=DEFAULT_OT_TOL_PERCENT):
    return Objective(domain, data, ot_tol_percent).grad_f(seeds, fd_step)
