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

"""Grain label grids.

A label grid file is plain text. The first line is
``width height pixel_size`` optionally followed by the origin ``ox oy``.
It is followed by ``height`` rows of ``width`` whitespace separated
integers. Row 0 is the top of the image and so has the largest y. A label
of -1 marks a pixel that belongs to no grain.
"""

import dataclasses
import logging

import numpy as np
from scipy import ndimage

from laguerre_fit import exception
from laguerre_fit import geom2d
from laguerre_fit import objective
from laguerre_fit import utils

LOG = logging.getLogger(__name__)

NO_GRAIN = -1


@dataclasses.dataclass
class LabelGrid:
    """A dense grain label image.

    ``labels`` has shape ``(height, width)`` with row 0 at the top.
    ``label_map[i]`` is the label grain ``i`` had in the source file.
    """

    width: int
    height: int
    labels: np.ndarray
    pixel_size: float
    origin: tuple = (0.0, 0.0)
    label_map: list = None

    @property
    def n(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def counts(self):
        valid = self.labels[self.labels != NO_GRAIN]
        return np.bincount(valid, minlength=self.n)


def pixel_centers(width, height, pixel_size, origin=(0.0, 0.0)):
    """Centres of the pixels of an image, shape ``(height, width, 2)``."""
    ox, oy = origin
    xs = ox + (np.arange(width) + 0.5) * pixel_size
    ys = oy + (height - np.arange(height) - 0.5) * pixel_size
    grid_x, grid_y = np.meshgrid(xs, ys)
    return np.stack([grid_x, grid_y], axis=-1)


def _parse_number(token, kind, line, column):
    try:
        return kind(token)
    except ValueError:
        raise exception.ParseError("Expected %s, got %r" %
                                   (kind.__name__, token), line, column)


def densify(raw):
    """Relabel to 0..n-1 in order of first occurrence.

    :returns: ``(labels, label_map)``.
    """
    flat = raw.reshape(-1)
    valid = flat[flat != NO_GRAIN]
    if np.any(valid < 0):
        raise exception.ParseError("Labels must be non-negative or %d" %
                                   NO_GRAIN)
    if valid.size == 0:
        raise exception.EmptyGrid("The grid contains no grain")
    unique, first, inverse = np.unique(valid, return_index=True,
                                       return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    dense = np.full(flat.shape, NO_GRAIN, dtype=int)
    dense[flat != NO_GRAIN] = rank[inverse.reshape(-1)]
    label_map = unique[order]
    return dense.reshape(raw.shape), [int(label) for label in label_map]


def parse_label_grid(text):
    """Parse the text of a label grid file."""
    lines = [(number, line.split())
             for number, line in enumerate(text.splitlines(), start=1)
             if line.strip()]
    if not lines:
        raise exception.EmptyGrid("The grid file is empty")
    number, header = lines[0]
    if len(header) not in (3, 5):
        raise exception.ParseError(
            "Header must be 'width height pixel_size [ox oy]'", number)
    width = _parse_number(header[0], int, number, 1)
    height = _parse_number(header[1], int, number, 2)
    pixel_size = _parse_number(header[2], float, number, 3)
    origin = (0.0, 0.0)
    if len(header) == 5:
        origin = (_parse_number(header[3], float, number, 4),
                  _parse_number(header[4], float, number, 5))
    if width <= 0 or height <= 0:
        raise exception.EmptyGrid("Grid is %d x %d pixels" % (width, height))
    if not pixel_size > 0:
        raise exception.ParseError("pixel_size must be positive", number, 3)

    rows = lines[1:]
    if len(rows) != height:
        raise exception.ParseError(
            "Expected %d rows, found %d" % (height, len(rows)),
            rows[-1][0] if rows else number)
    raw = np.empty((height, width), dtype=int)
    for r, (number, tokens) in enumerate(rows):
        if len(tokens) != width:
            raise exception.ParseError(
                "Row %d has %d labels, expected %d" %
                (r, len(tokens), width), number, min(len(tokens), width) + 1)
        raw[r] = [_parse_number(token, int, number, c + 1)
                  for c, token in enumerate(tokens)]
    labels, label_map = densify(raw)
    if label_map != list(range(len(label_map))):
        LOG.info("Relabelled %d grains to a dense index", len(label_map))
    return LabelGrid(width, height, labels, pixel_size, origin, label_map)


def load_label_grid(path):
    """Read a label grid file."""
    return parse_label_grid(utils.read_file(path))


def format_label_grid(grid):
    """Text of a label grid in the format read by :func:`load_label_grid`."""
    header = "%d %d %r" % (grid.width, grid.height, float(grid.pixel_size))
    if tuple(grid.origin) != (0.0, 0.0):
        header += " %r %r" % tuple(float(o) for o in grid.origin)
    rows = [" ".join(str(label) for label in row) for row in grid.labels]
    return "\n".join([header] + rows) + "\n"


def _warn_disconnected(labels):
    for index, box in enumerate(ndimage.find_objects(labels + 1)):
        if box is None:
            continue
        _, components = ndimage.label(labels[box] == index)
        if components > 1:
            LOG.warning("Grain %d has %d disconnected parts; they are "
                        "treated as one grain", index, components)


def grid_to_targets(grid, domain=None):
    """Areas and centroids of the grains of a label grid.

    :param domain: overrides the rectangle covered by the grid.
    :returns: ``(Domain, TargetData)``.
    """
    if domain is None:
        domain = geom2d.Domain.rectangle(grid.width * grid.pixel_size,
                                         grid.height * grid.pixel_size,
                                         grid.origin)
    _warn_disconnected(grid.labels)
    mask = grid.labels != NO_GRAIN
    labels = grid.labels[mask]
    centers = pixel_centers(grid.width, grid.height, grid.pixel_size,
                            grid.origin)[mask]
    counts = np.bincount(labels, minlength=grid.n).astype(float)
    if np.any(counts == 0):
        raise exception.InvalidInput(
            "Grains %s have no pixels" % np.flatnonzero(counts == 0).tolist())
    centroids = np.column_stack([
        np.bincount(labels, weights=centers[:, k], minlength=grid.n) / counts
        for k in range(2)])
    data = objective.TargetData(counts * grid.pixel_size ** 2, centroids)
    LOG.debug("Extracted %d grains from a %dx%d grid", data.n, grid.width,
              grid.height)
    return domain, data
