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

"""Convex polygon arithmetic and Laguerre (power) diagrams in the plane.

Cells are built by clipping the domain with the bisector half-planes of
every other generator. A cell is a :class:`Polygon` whose edges carry the
index of the generator that produced them (-1 for the domain boundary), so
that shared-edge lengths fall out of the construction.
"""

import collections
import dataclasses
import logging

import numpy as np

from laguerre_fit import exception

LOG = logging.getLogger(__name__)

# Absolute clipping tolerance for an O(1) domain; scaled by diam**2.
CLIP_TOL = 1e-12

# Half-planes applied per pruning round in build_laguerre.
_CLIP_BATCH = 8

Moments = collections.namedtuple("Moments",
                                 ["area", "centroid", "second_moment"])


@dataclasses.dataclass(frozen=True, eq=False)
class Polygon:
    """Convex polygon with counterclockwise vertices.

    ``labels[k]`` identifies the constraint that produced the edge from
    ``vertices[k]`` to ``vertices[k + 1]``.
    """

    vertices: np.ndarray
    labels: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2)), np.zeros(0, dtype=int))

    @classmethod
    def from_points(cls, points, labels=None):
        vertices = np.asarray(points, dtype=float).reshape(-1, 2)
        if labels is None:
            labels = np.full(len(vertices), -1, dtype=int)
        return cls(vertices, np.asarray(labels, dtype=int))

    @property
    def is_empty(self):
        return len(self.vertices) < 3

    def __len__(self):
        return len(self.vertices)

    def edge_lengths(self):
        if self.is_empty:
            return np.zeros(0)
        delta = np.roll(self.vertices, -1, axis=0) - self.vertices
        return np.hypot(delta[:, 0], delta[:, 1])


def _signed_area(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


class Domain(object):
    """Convex polygonal region with cached moments."""

    def __init__(self, points):
        vertices = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(vertices) < 3 or not np.all(np.isfinite(vertices)):
            raise exception.InvalidInput(
                "A domain needs at least three finite vertices")
        if _signed_area(vertices) < 0:
            vertices = vertices[::-1].copy()
        self.boundary = Polygon.from_points(vertices)
        lo = vertices.min(axis=0)
        hi = vertices.max(axis=0)
        self.bounds = (lo[0], lo[1], hi[0], hi[1])
        self.diameter = float(np.max(
            np.linalg.norm(vertices[:, None, :] - vertices[None, :, :],
                           axis=2)))
        turn = _edge_cross(vertices)
        if np.any(turn < -CLIP_TOL * self.diameter ** 2):
            raise exception.InvalidInput("The domain must be convex")
        moments = polygon_moments(self.boundary)
        if moments.area <= 0:
            raise exception.InvalidInput("The domain has zero area")
        self.area = moments.area
        self.centroid = moments.centroid
        self.second_moment = moments.second_moment
        self.is_rectangle = bool(
            len(vertices) == 4 and
            np.all(np.isin(vertices[:, 0], [lo[0], hi[0]])) and
            np.all(np.isin(vertices[:, 1], [lo[1], hi[1]])))

    @classmethod
    def rectangle(cls, width, height, origin=(0.0, 0.0)):
        x0, y0 = origin
        return cls([(x0, y0), (x0 + width, y0),
                    (x0 + width, y0 + height), (x0, y0 + height)])

    @property
    def scale(self):
        """Natural magnitude of H-like quantities: area times diameter."""
        return self.area * self.diameter

    @property
    def width(self):
        return self.bounds[2] - self.bounds[0]

    @property
    def height(self):
        return self.bounds[3] - self.bounds[1]

    @property
    def tolerance(self):
        return CLIP_TOL * self.diameter ** 2

    def contains(self, point, tol=1e-12):
        """Whether a point lies in the closed domain."""
        if self.is_rectangle:
            x, y = point
            slack = tol * self.diameter
            return bool(self.bounds[0] - slack <= x <= self.bounds[2] + slack
                        and
                        self.bounds[1] - slack <= y <= self.bounds[3] + slack)
        normals, offsets = _edge_halfplanes(self.boundary.vertices)
        values = normals @ np.asarray(point, dtype=float) - offsets
        return bool(np.all(values <= tol * self.diameter ** 2))

    def contains_points(self, points, tol=1e-12):
        """Vectorised :meth:`contains` for an (m, 2) array."""
        normals, offsets = _edge_halfplanes(self.boundary.vertices)
        values = np.asarray(points, dtype=float) @ normals.T - offsets
        return np.all(values <= tol * self.diameter ** 2, axis=1)

    def boundary_distance(self, point):
        """Signed distance to the boundary, positive inside."""
        normals, offsets = _edge_halfplanes(self.boundary.vertices)
        lengths = np.linalg.norm(normals, axis=1)
        return float(np.min(
            (offsets - normals @ np.asarray(point, dtype=float)) / lengths))

    def to_dict(self):
        return {"boundary": self.boundary.vertices.tolist()}


def _edge_cross(vertices):
    edges = np.roll(vertices, -1, axis=0) - vertices
    following = np.roll(edges, -1, axis=0)
    return edges[:, 0] * following[:, 1] - edges[:, 1] * following[:, 0]


def _edge_halfplanes(vertices):
    """Half-planes ``normal . x <= offset`` bounding a ccw polygon."""
    delta = np.roll(vertices, -1, axis=0) - vertices
    normals = np.stack([delta[:, 1], -delta[:, 0]], axis=1)
    offsets = np.einsum("ij,ij->i", normals, vertices)
    return normals, offsets


def _drop_duplicates(vertices, labels, tol):
    """Remove zero-length edges left behind by clipping."""
    keep = np.ones(len(vertices), dtype=bool)
    for k in range(len(vertices)):
        nxt = (k + 1) % len(vertices)
        if np.sum((vertices[nxt] - vertices[k]) ** 2) <= tol:
            keep[k] = False
    if not keep.any():
        return vertices[:0], labels[:0]
    return vertices[keep], labels[keep]


def clip_halfplane(poly, normal, offset, label=-1, tol=CLIP_TOL):
    """Intersect a convex polygon with ``{x : normal . x <= offset}``.

    Vertices within ``tol`` of the line count as inside. The new edge on the
    cut line carries ``label``.
    """
    if poly.is_empty:
        return poly
    vertices = poly.vertices
    distance = vertices @ np.asarray(normal, dtype=float) - offset
    inside = distance <= tol
    if inside.all():
        return poly
    if not inside.any():
        return Polygon.empty()
    out_vertices = []
    out_labels = []
    count = len(vertices)
    for k in range(count):
        nxt = (k + 1) % count
        if inside[k]:
            out_vertices.append(vertices[k])
            out_labels.append(poly.labels[k])
        if inside[k] != inside[nxt]:
            t = distance[k] / (distance[k] - distance[nxt])
            point = vertices[k] + t * (vertices[nxt] - vertices[k])
            out_vertices.append(point)
            # Exit points start the cut edge, entry points resume edge k.
            out_labels.append(label if inside[k] else poly.labels[k])
    out_vertices = np.array(out_vertices)
    out_labels = np.array(out_labels, dtype=int)
    scale = max(np.max(np.abs(out_vertices)), 1.0)
    out_vertices, out_labels = _drop_duplicates(
        out_vertices, out_labels, (CLIP_TOL * scale) ** 2)
    if len(out_vertices) < 3 or _signed_area(out_vertices) <= 0:
        return Polygon.empty()
    return Polygon(out_vertices, out_labels)


def polygon_intersection(first, second):
    """Intersection of two convex polygons."""
    if first.is_empty or second.is_empty:
        return Polygon.empty()
    result = first
    for normal, offset in zip(*_edge_halfplanes(second.vertices)):
        result = clip_halfplane(result, normal, offset)
        if result.is_empty:
            break
    return result


def polygon_moments(poly):
    """Area, centroid and integral of |x|**2 by per-edge Green formulas."""
    if poly.is_empty:
        return Moments(0.0, None, 0.0)
    x0, y0 = poly.vertices[:, 0], poly.vertices[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    cross = x0 * y1 - x1 * y0
    area = 0.5 * np.sum(cross)
    if area <= 0:
        return Moments(0.0, None, 0.0)
    cx = np.sum((x0 + x1) * cross) / (6.0 * area)
    cy = np.sum((y0 + y1) * cross) / (6.0 * area)
    second = np.sum(cross * (x0 * x0 + x0 * x1 + x1 * x1 +
                             y0 * y0 + y0 * y1 + y1 * y1)) / 12.0
    return Moments(float(area), np.array([cx, cy]), float(second))


def cell_transport_cost(cell, seed):
    """Integral of |x - seed|**2 over a cell."""
    if cell.is_empty:
        return 0.0
    shifted = Polygon(cell.vertices - np.asarray(seed, dtype=float),
                      cell.labels)
    return polygon_moments(shifted).second_moment


def as_seeds(points):
    """Validate a seed configuration as an (n, 2) float array."""
    seeds = np.array(points, dtype=float)
    if seeds.ndim == 1 and seeds.size == 2:
        seeds = seeds.reshape(1, 2)
    if seeds.ndim != 2 or seeds.shape[1] != 2 or len(seeds) < 1:
        raise exception.InvalidInput(
            "Seeds must be a non-empty list of planar points")
    if not np.all(np.isfinite(seeds)):
        raise exception.InvalidInput("Seeds must be finite")
    return seeds


def as_weights(weights, n):
    weights = np.array(weights, dtype=float).reshape(-1)
    if len(weights) != n:
        raise exception.InvalidInput(
            "Got %d weights for %d seeds" % (len(weights), n))
    if not np.all(np.isfinite(weights)):
        raise exception.InvalidInput("Weights must be finite")
    return weights


def normalize_weights(weights):
    """Shift weights so that the last one is zero."""
    weights = np.asarray(weights, dtype=float)
    return weights - weights[-1]


def min_pairwise_distance(seeds):
    seeds = np.asarray(seeds, dtype=float)
    if len(seeds) < 2:
        return np.inf
    diff = seeds[:, None, :] - seeds[None, :, :]
    dist = np.sqrt(np.sum(diff ** 2, axis=2))
    return float(np.min(dist[np.triu_indices(len(seeds), k=1)]))


def seeds_distinct(seeds, tol=0.0):
    """Membership test for the set of distinct seed configurations."""
    return min_pairwise_distance(seeds) > tol


def rescale_generators(seeds, weights, lam, shift):
    """Dilate and translate seeds, adjusting weights to keep every cell.

    Returns ``(lam * X + t, w2)`` with
    ``w2_i = lam w_i + 2 lam t . x_i + lam (lam - 1) |x_i|**2``.
    """
    seeds = np.asarray(seeds, dtype=float)
    weights = np.asarray(weights, dtype=float)
    shift = np.asarray(shift, dtype=float)
    squared = np.einsum("ij,ij->i", seeds, seeds)
    new_weights = (lam * weights + 2.0 * lam * (seeds @ shift) +
                   lam * (lam - 1.0) * squared)
    return lam * seeds + shift, new_weights


@dataclasses.dataclass(eq=False)
class LaguerreDiagram:
    """Cells of a Laguerre diagram together with their moments."""

    domain: Domain
    seeds: np.ndarray
    weights: np.ndarray
    cells: list
    areas: np.ndarray
    centroids: list
    edges: list

    @property
    def n(self):
        return len(self.cells)

    def empty_cells(self):
        return [i for i, area in enumerate(self.areas) if area <= 0]

    def centroid_array(self):
        """Centroids as an (n, 2) array with NaN rows for empty cells."""
        out = np.full((self.n, 2), np.nan)
        for i, centroid in enumerate(self.centroids):
            if centroid is not None:
                out[i] = centroid
        return out

    def to_dict(self):
        return {
            "domain": self.domain.to_dict(),
            "seeds": self.seeds.tolist(),
            "weights": self.weights.tolist(),
            "cells": [cell.vertices.tolist() for cell in self.cells],
            "areas": self.areas.tolist(),
            "centroids": [None if c is None else c.tolist()
                          for c in self.centroids],
            "edges": [[i, j, length] for i, j, length in self.edges],
        }


def _coincident_empty(i, j, offset):
    """Tie rule for generators sharing a position."""
    return offset < 0 or (offset == 0 and j < i)


def _power_cell(domain, seeds, weights, squared, i, tol):
    normals = 2.0 * (seeds - seeds[i])
    offsets = squared - squared[i] - weights + weights[i]
    others = np.arange(len(seeds)) != i
    coincident = others & ~np.any(normals, axis=1)
    for j in np.flatnonzero(coincident):
        if _coincident_empty(i, j, offsets[j]):
            return Polygon.empty()
    candidates = np.flatnonzero(others & ~coincident)
    distance = np.sum((seeds[candidates] - seeds[i]) ** 2, axis=1)
    pending = candidates[np.argsort(distance, kind="stable")]
    poly = domain.boundary
    while pending.size and not poly.is_empty:
        values = (poly.vertices @ normals[pending].T) - offsets[pending]
        cutting = pending[np.any(values > tol, axis=0)]
        for j in cutting[:_CLIP_BATCH]:
            poly = clip_halfplane(poly, normals[j], offsets[j], label=j,
                                  tol=tol)
            if poly.is_empty:
                break
        # Half-planes that contain the cell keep containing it.
        pending = cutting[_CLIP_BATCH:]
    return poly


def build_laguerre(domain, seeds, weights):
    """Laguerre diagram of the generators ``(seeds, weights)`` in a domain.

    Coincident seeds are resolved by weight, with the lowest index winning
    exact ties; the losing cells are empty.
    """
    seeds = as_seeds(seeds)
    weights = as_weights(weights, len(seeds))
    squared = np.einsum("ij,ij->i", seeds, seeds)
    tol = domain.tolerance
    cells = []
    areas = np.zeros(len(seeds))
    centroids = []
    shared = collections.defaultdict(list)
    for i in range(len(seeds)):
        cell = _power_cell(domain, seeds, weights, squared, i, tol)
        moments = polygon_moments(cell)
        cells.append(cell)
        areas[i] = moments.area
        centroids.append(moments.centroid)
        for label, length in zip(cell.labels, cell.edge_lengths()):
            if label >= 0:
                shared[(min(i, label), max(i, label))].append(length)
    min_length = CLIP_TOL * domain.diameter
    edges = []
    for (i, j), lengths in sorted(shared.items()):
        length = float(np.mean(lengths))
        if length > min_length:
            edges.append((int(i), int(j), length))
    return LaguerreDiagram(domain, seeds, weights, cells, areas, centroids,
                           edges)

