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

import csv
import io
import json
import logging
import math
import os
import sys

import yaml

from laguerre_fit import exception

LOG = logging.getLogger(__name__)

TARGET_COLUMNS = ("v", "bx", "by")
SEED_COLUMNS = ("x", "y")
ANISOTROPY_COLUMNS = ("a11", "a12", "a22")
TRACE_COLUMNS = ("iter", "objective", "f", "min_pair_dist_over_delta",
                 "active_constraints")


def read_file(path, mode="r"):
    """Read the content of a file."""
    with open(path, mode) as f:
        return f.read()


def write_file(path, content, mode="w"):
    """Write content to a file, creating its directory if needed."""
    directory = os.path.dirname(path)
    if directory and not os.path.isdir(directory):
        os.makedirs(directory)
    with open(path, mode) as f:
        f.write(content)


def read_yaml_file(path):
    """Read and decode a YAML file."""
    try:
        content = read_file(path)
    except IOError as e:
        LOG.error("Failed to open config file %s: %s", path, repr(e))
        sys.exit(1)
    try:
        return yaml.safe_load(content)
    except yaml.YAMLError as e:
        LOG.error("Failed to decode config file YAML %s: %s", path, repr(e))
        sys.exit(1)


def is_readable_dir(path):
    """Check whether a path references a readable directory."""
    if not os.path.exists(path):
        return {"result": False, "message": "Path does not exist"}
    if not os.path.isdir(path):
        return {"result": False, "message": "Path is not a directory"}
    if not os.access(path, os.R_OK):
        return {"result": False, "message": "Directory is not readable"}
    return {"result": True}


def is_readable_file(path):
    """Check whether a path references a readable file."""
    if not os.path.exists(path):
        return {"result": False, "message": "Path does not exist"}
    if not os.path.isfile(path):
        return {"result": False, "message": "Path is not a file"}
    if not os.access(path, os.R_OK):
        return {"result": False, "message": "File is not readable"}
    return {"result": True}


def is_writable_path(path):
    """Check whether a file can be created at a path."""
    directory = os.path.dirname(os.path.abspath(path))
    if os.path.isdir(path):
        return {"result": False, "message": "Path is a directory"}
    while not os.path.exists(directory):
        directory = os.path.dirname(directory)
    if not os.access(directory, os.W_OK):
        return {"result": False, "message": "Directory is not writable"}
    return {"result": True}


def parse_table(text, columns):
    """Parse CSV text with an exact header into a list of float rows."""
    reader = csv.reader(io.StringIO(text))
    rows = []
    header = None
    for line, record in enumerate(reader, start=1):
        if not record or not "".join(record).strip():
            continue
        if header is None:
            header = tuple(cell.strip() for cell in record)
            if header != tuple(columns):
                raise exception.ParseError(
                    "Expected header %s, got %s" %
                    (",".join(columns), ",".join(header)), line)
            continue
        if len(record) != len(columns):
            raise exception.ParseError(
                "Expected %d columns, got %d" % (len(columns), len(record)),
                line)
        row = []
        for column, cell in enumerate(record, start=1):
            try:
                value = float(cell)
            except ValueError:
                raise exception.ParseError("Not a number: %r" % cell, line,
                                           column)
            if not math.isfinite(value):
                raise exception.ParseError("Not finite: %r" % cell, line,
                                           column)
            row.append(value)
        rows.append(row)
    if header is None:
        raise exception.ParseError("Missing header %s" % ",".join(columns),
                                   1)
    if not rows:
        raise exception.InvalidInput("The table has no rows")
    return rows


def format_table(columns, rows):
    """CSV text with full double precision."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(value) for value in row])
    return out.getvalue()


def _format_cell(value):
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):
        return _format_cell(value.item())
    return str(value)


def load_targets(path):
    """Read target areas and centroids: ``(v, B)`` as lists."""
    rows = parse_table(read_file(path), TARGET_COLUMNS)
    return [row[0] for row in rows], [row[1:] for row in rows]


def dump_targets(v, B):
    return format_table(TARGET_COLUMNS,
                        [(float(a), float(b[0]), float(b[1]))
                         for a, b in zip(v, B)])


def load_seeds(path):
    return parse_table(read_file(path), SEED_COLUMNS)


def dump_seeds(seeds):
    return format_table(SEED_COLUMNS,
                        [(float(x), float(y)) for x, y in seeds])


def load_anisotropy(path):
    """Read symmetric 2x2 matrices stored as ``a11,a12,a22`` rows."""
    rows = parse_table(read_file(path), ANISOTROPY_COLUMNS)
    return [[[a11, a12], [a12, a22]] for a11, a12, a22 in rows]


def dump_trace(records):
    """Trace CSV of optimiser records."""
    rows = []
    for record in records:
        rows.append((record["iteration"], float(record["objective"]),
                     _optional(record.get("f")),
                     _optional(record.get("min_pair_dist_over_delta")),
                     record.get("active_constraints", "")))
    return format_table(TRACE_COLUMNS, rows)


def _optional(value):
    return "" if value is None else float(value)


def _jsonable(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    raise TypeError("Cannot serialise %r" % type(value))


def dump_json(document):
    """Deterministic JSON text."""
    return json.dumps(document, indent=2, sort_keys=True,
                      default=_jsonable) + "\n"
