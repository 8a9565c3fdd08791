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

"""SVG pictures of diagrams and optimisation traces.

Diagrams are drawn with y pointing up, the same convention as label grids.
"""

import xml.etree.ElementTree as ET

import numpy as np

SVG_NS = "http://www.w3.org/2000/svg"

CANVAS = 800.0

CELL_COLOUR = "black"
COMPUTED_COLOUR = "red"
TARGET_COLOUR = "blue"


def _root(width, height):
    return ET.Element("svg", xmlns=SVG_NS, version="1.1",
                      width="%gpx" % width, height="%gpx" % height,
                      viewBox="0 0 %g %g" % (width, height))


def _points(points):
    return " ".join("%.6f,%.6f" % (x, y) for x, y in points)


class _Frame(object):
    """Map a bounding box onto the canvas with the y axis flipped."""

    def __init__(self, bounds, size=CANVAS, margin=0.05):
        x0, y0, x1, y1 = bounds
        span = max(x1 - x0, y1 - y0)
        self.scale = size * (1.0 - 2.0 * margin) / span
        self.x0, self.y1 = x0, y1
        self.pad = size * margin
        self.width = (x1 - x0) * self.scale + 2.0 * self.pad
        self.height = (y1 - y0) * self.scale + 2.0 * self.pad

    def __call__(self, points):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        xs = self.pad + (points[:, 0] - self.x0) * self.scale
        ys = self.pad + (self.y1 - points[:, 1]) * self.scale
        return np.column_stack([xs, ys])


def _dot(parent, point, colour, radius=3.0):
    ET.SubElement(parent, "circle", cx="%.6f" % point[0],
                  cy="%.6f" % point[1], r="%g" % radius, fill=colour)


def render_diagram(cells, domain, targets=None, computed=None):
    """SVG text of polygonal cells with computed and target centroids.

    Cells are black outlines, computed centroids red dots and target
    centroids blue dots.
    """
    frame = _Frame(domain.bounds)
    svg = _root(frame.width, frame.height)
    outlines = ET.SubElement(svg, "g", fill="none", stroke=CELL_COLOUR)
    outlines.set("stroke-width", "1")
    ET.SubElement(outlines, "polygon",
                  points=_points(frame(domain.boundary.vertices)))
    for cell in cells:
        if len(cell):
            ET.SubElement(outlines, "polygon",
                          points=_points(frame(cell.vertices)))
    for points, colour in ((computed, COMPUTED_COLOUR),
                           (targets, TARGET_COLOUR)):
        if points is None:
            continue
        group = ET.SubElement(svg, "g")
        for point in frame([p for p in points if p is not None and
                            np.all(np.isfinite(p))]):
            _dot(group, point, colour)
    return ET.tostring(svg, encoding="unicode")


def render_laguerre(diagram, targets=None):
    return render_diagram(diagram.cells, diagram.domain, targets,
                          diagram.centroids)


def render_raster(raster, targets=None):
    """Cell boundaries of a raster diagram as pixel edge segments."""
    grid = raster.grid
    frame = _Frame(grid.domain.bounds)
    svg = _root(frame.width, frame.height)
    x0, y0, x1, y1 = grid.domain.bounds
    labels = raster.labels
    segments = []
    rows, cols = np.nonzero(labels[:, 1:] != labels[:, :-1])
    for r, c in zip(rows, cols):
        x = x0 + (c + 1) * grid.pixel_width
        segments.append(((x, y1 - r * grid.pixel_height),
                         (x, y1 - (r + 1) * grid.pixel_height)))
    rows, cols = np.nonzero(labels[1:, :] != labels[:-1, :])
    for r, c in zip(rows, cols):
        y = y1 - (r + 1) * grid.pixel_height
        segments.append(((x0 + c * grid.pixel_width, y),
                         (x0 + (c + 1) * grid.pixel_width, y)))
    edges = ET.SubElement(svg, "g", stroke=CELL_COLOUR)
    edges.set("stroke-width", "1")
    ET.SubElement(edges, "polygon", fill="none",
                  points=_points(frame(grid.domain.boundary.vertices)))
    for start, end in segments:
        (ax, ay), (bx, by) = frame([start, end])
        ET.SubElement(edges, "line", x1="%.6f" % ax, y1="%.6f" % ay,
                      x2="%.6f" % bx, y2="%.6f" % by)
    for points, colour in ((raster.centroids, COMPUTED_COLOUR),
                           (targets, TARGET_COLOUR)):
        if points is None:
            continue
        group = ET.SubElement(svg, "g")
        finite = [p for p in points if np.all(np.isfinite(p))]
        for point in frame(finite):
            _dot(group, point, colour)
    return ET.tostring(svg, encoding="unicode")


def render_trace(values, log_scale=False, width=CANVAS, height=CANVAS / 2):
    """A polyline chart of one trace column against iteration."""
    values = np.asarray(values, dtype=float)
    if log_scale:
        values = np.log10(np.maximum(np.abs(values), np.finfo(float).tiny))
    finite = values[np.isfinite(values)]
    svg = _root(width, height)
    axes = ET.SubElement(svg, "g", fill="none", stroke=CELL_COLOUR)
    ET.SubElement(axes, "polyline", points=_points(
        [(0.05 * width, 0.05 * height), (0.05 * width, 0.95 * height),
         (0.95 * width, 0.95 * height)]))
    if finite.size == 0:
        return ET.tostring(svg, encoding="unicode")
    lo, hi = float(np.min(finite)), float(np.max(finite))
    span = hi - lo if hi > lo else 1.0
    steps = max(len(values) - 1, 1)
    points = [(0.05 * width + 0.9 * width * k / steps,
               0.95 * height - 0.9 * height * (value - lo) / span)
              for k, value in enumerate(values) if np.isfinite(value)]
    line = ET.SubElement(svg, "polyline", fill="none",
                         stroke=COMPUTED_COLOUR, points=_points(points))
    line.set("stroke-width", "1.5")
    return ET.tostring(svg, encoding="unicode")
