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

"""Optimiser options from defaults, a YAML file and command line flags."""

import logging
import os
import sys

from laguerre_fit import aniso
from laguerre_fit import fit
from laguerre_fit import utils

CONFIG_PATH_ENV = "LAGUERRE_FIT_CONFIG"

# Recognised configuration keys and their types.
CONFIG_KEYS = {
    "delta": float,
    "radius": float,
    "ftol": float,
    "max_iters": int,
    "ot_tol_percent": float,
    "penalty_initial": float,
    "penalty_factor": float,
    "penalty_max": float,
    "round_iters": int,
    "resolution": int,
}

# Flags overriding configuration keys.
FLAG_KEYS = ("delta", "radius", "ftol", "max_iters")

LOG = logging.getLogger(__name__)


def add_args(parser):
    """Add optimiser arguments to a parser."""
    default_config = os.getenv(CONFIG_PATH_ENV)
    parser.add_argument("--config", default=default_config,
                        help="path to a YAML file of optimiser options "
                             "(default=$%s)" % CONFIG_PATH_ENV)
    parser.add_argument("--delta", type=float,
                        help="minimum distance between seeds "
                             "(default=1e-3 times the domain width)")
    parser.add_argument("--radius", type=float,
                        help="radius of the ball constraining the seeds "
                             "(default=sqrt(area * n))")
    parser.add_argument("--ftol", type=float,
                        help="change of the objective, relative to its "
                             "starting value, below which the optimiser "
                             "stops")
    parser.add_argument("--max-iters", type=int,
                        help="maximum number of optimiser iterations "
                             "(default=1000)")


def load_config(path):
    """Read and validate a configuration file."""
    result = utils.is_readable_file(path)
    if not result["result"]:
        LOG.error("Configuration file %s is invalid: %s",
                  path, result["message"])
        sys.exit(1)
    config = utils.read_yaml_file(path) or {}
    if not isinstance(config, dict):
        LOG.error("Configuration file %s must contain a mapping", path)
        sys.exit(1)
    unknown = sorted(set(config) - set(CONFIG_KEYS))
    if unknown:
        LOG.error("Unknown keys in configuration file %s: %s",
                  path, ", ".join(unknown))
        sys.exit(1)
    values = {}
    for key, value in config.items():
        try:
            values[key] = CONFIG_KEYS[key](value)
        except (TypeError, ValueError):
            LOG.error("Configuration key %s in %s must be a %s, got %r",
                      key, path, CONFIG_KEYS[key].__name__, value)
            sys.exit(1)
    return values


def get_settings(parsed_args):
    """Merge the configuration file with command line flags."""
    settings = {}
    if getattr(parsed_args, "config", None):
        settings.update(load_config(parsed_args.config))
    for key in FLAG_KEYS:
        value = getattr(parsed_args, key, None)
        if value is not None:
            settings[key] = value
    resolution = getattr(parsed_args, "resolution", None)
    if resolution is not None:
        settings["resolution"] = resolution
    return settings


def build_options(parsed_args, domain, n):
    """FitOptions for a problem with ``n`` cells on ``domain``."""
    settings = get_settings(parsed_args)
    settings.pop("resolution", None)
    return fit.default_options(domain, n, **settings)


def get_resolution(parsed_args):
    return get_settings(parsed_args).get("resolution",
                                         aniso.DEFAULT_RESOLUTION)
