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

"""Synthetic target data.

Random numbers come from numpy's PCG64 bit generator seeded with the
integer given by the caller, so equal seeds give identical data on every
platform.
"""

import dataclasses
import logging
import math

import numpy as np

from laguerre_fit import exception
from laguerre_fit import geom2d
from laguerre_fit import objective

LOG = logging.getLogger(__name__)

MAX_SAMPLING_ATTEMPTS = 100

# Seeds closer than this, relative to the domain diameter, are redrawn.
MIN_SEED_SEPARATION = 1e-6


def make_rng(seed=None):
    """A PCG64 generator; ``None`` draws fresh OS entropy."""
    return np.random.Generator(np.random.PCG64(seed))


def sample_uniform(domain, n, rng):
    """``n`` points drawn uniformly from the domain by rejection."""
    lo = np.array(domain.bounds[:2])
    extent = np.array([domain.width, domain.height])
    points = np.empty((n, 2))
    count = 0
    while count < n:
        candidate = lo + extent * rng.random(2)
        if domain.is_rectangle or domain.contains(candidate):
            points[count] = candidate
            count += 1
    return points


def random_voronoi_data(domain, n, rng_seed=None):
    """Areas and centroids of the Voronoi diagram of uniform random seeds.

    :returns: ``(seeds, TargetData, LaguerreDiagram)``.
    """
    if n < 1:
        raise exception.InvalidInput("Need at least one seed, got %d" % n)
    rng = make_rng(rng_seed)
    for attempt in range(MAX_SAMPLING_ATTEMPTS):
        seeds = sample_uniform(domain, n, rng)
        if (n == 1 or geom2d.min_pairwise_distance(seeds) >=
                MIN_SEED_SEPARATION * domain.diameter):
            break
        LOG.debug("Discarding degenerate seed draw %d", attempt)
    else:
        raise exception.DegenerateSampling(
            "No well separated draw of %d seeds in %d attempts" %
            (n, MAX_SAMPLING_ATTEMPTS))
    diagram = geom2d.build_laguerre(domain, seeds, np.zeros(n))
    data = objective.TargetData(diagram.areas.copy(),
                                diagram.centroid_array())
    return seeds, data, diagram


@dataclasses.dataclass(frozen=True)
class PerturbationSpec:
    """Displacement size ``epsilon`` and the seed of its random angles."""

    epsilon: float
    rng_seed: int = None

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise exception.InvalidInput(
                "epsilon must be finite and non-negative, got %r" %
                self.epsilon)


def perturb_data(data, spec, domain):
    """Move every centroid by at most ``epsilon`` keeping data compatible.

    Each cell draws a radius fraction and then an angle. The common
    translation restoring the area-weighted mean centroid is applied to all
    cells afterwards.
    """
    if spec.epsilon == 0:
        return objective.TargetData(data.v.copy(), data.B.copy())
    rng = make_rng(spec.rng_seed)
    draws = rng.random((data.n, 2))
    radius = spec.epsilon * draws[:, 0]
    angle = 2.0 * np.pi * draws[:, 1]
    moved = data.B + radius[:, None] * np.column_stack(
        [np.cos(angle), np.sin(angle)])
    correction = domain.centroid - data.v @ moved / domain.area
    perturbed = moved + correction
    outside = [i for i, b in enumerate(perturbed) if not domain.contains(b)]
    if outside:
        raise exception.CentroidLeftDomain(outside)
    LOG.debug("Perturbed %d centroids by epsilon %g, correction %s",
              data.n, spec.epsilon, correction.tolist())
    return objective.TargetData(data.v.copy(), perturbed)
