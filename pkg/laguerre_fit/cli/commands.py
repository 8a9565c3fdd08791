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
import sys

from cliff.command import Command

from laguerre_fit import aniso
from laguerre_fit import fit
from laguerre_fit import geom2d
from laguerre_fit import ingest
from laguerre_fit import objective
from laguerre_fit import options
from laguerre_fit import sdot
from laguerre_fit import svg
from laguerre_fit import synth
from laguerre_fit import utils


def _trace_path(out):
    """Path of the trace CSV written next to an output file."""
    return os.path.splitext(out)[0] + ".trace.csv"


def _sibling_path(out, suffix):
    return os.path.splitext(out)[0] + suffix


class PathValidationMixin(object):
    """Mixin class for commands that read and write files."""

    input_args = ()
    output_args = ()

    def validate_paths(self, parsed_args):
        """Check input and output paths before any computation starts."""
        for name in self.input_args:
            path = getattr(parsed_args, name, None)
            if path is None:
                continue
            result = utils.is_readable_file(path)
            if not result["result"]:
                self.app.LOG.error("Input file %s is invalid: %s",
                                   path, result["message"])
                sys.exit(1)
        for name in self.output_args:
            path = getattr(parsed_args, name, None)
            if path is None:
                continue
            result = utils.is_writable_path(path)
            if not result["result"]:
                self.app.LOG.error("Output path %s is invalid: %s",
                                   path, result["message"])
                sys.exit(1)

    def write_output(self, path, content):
        self.app.LOG.debug("Writing %s", path)
        utils.write_file(path, content)

    def summarise(self, message, *args):
        args = tuple(arg.item() if hasattr(arg, "item") else arg
                     for arg in args)
        self.app.stdout.write((message % args) + "\n")


class DomainMixin(object):
    """Mixin class for commands working on a rectangular domain."""

    def get_parser(self, prog_name):
        parser = super(DomainMixin, self).get_parser(prog_name)
        group = parser.add_argument_group("Domain")
        group.add_argument("--domain", nargs=2, type=float,
                           metavar=("WIDTH", "HEIGHT"),
                           help="size of the rectangular domain with its "
                                "lower left corner at the origin "
                                "(default=1 1, or the grid extent)")
        return parser

    def get_domain(self, parsed_args):
        if parsed_args.domain is None:
            return geom2d.Domain.rectangle(1.0, 1.0)
        width, height = parsed_args.domain
        if not (width > 0 and height > 0):
            self.app.LOG.error("Domain size must be positive, got %g x %g",
                               width, height)
            sys.exit(1)
        return geom2d.Domain.rectangle(width, height)


class TargetDataMixin(DomainMixin):
    """Mixin class for commands reading target areas and centroids."""

    def get_parser(self, prog_name):
        parser = super(TargetDataMixin, self).get_parser(prog_name)
        group = parser.add_argument_group("Target data")
        source = group.add_mutually_exclusive_group(required=True)
        source.add_argument("--data", metavar="CSV",
                            help="target areas and centroids with header "
                                 "v,bx,by")
        source.add_argument("--grid", metavar="TXT",
                            help="grain label grid")
        return parser

    def load_target_data(self, parsed_args):
        """Return ``(domain, TargetData)`` from --data or --grid."""
        if parsed_args.grid:
            grid = ingest.load_label_grid(parsed_args.grid)
            override = None
            if parsed_args.domain is not None:
                override = self.get_domain(parsed_args)
            return ingest.grid_to_targets(grid, override)
        v, B = utils.load_targets(parsed_args.data)
        return self.get_domain(parsed_args), objective.TargetData(v, B)


class OptimizerMixin(object):
    """Mixin class for commands running the constrained optimiser."""

    def get_parser(self, prog_name):
        parser = super(OptimizerMixin, self).get_parser(prog_name)
        group = parser.add_argument_group("Optimiser")
        options.add_args(group)
        group.add_argument("--seed", type=int,
                           help="seed of the random initial configuration")
        return parser


class OutputMixin(object):
    """Mixin class for commands writing a result and an SVG picture."""

    def get_parser(self, prog_name):
        parser = super(OutputMixin, self).get_parser(prog_name)
        group = parser.add_argument_group("Output")
        group.add_argument("--out", metavar="PATH",
                           help="result file; a trace CSV is written next "
                                "to it where the command has one")
        group.add_argument("--svg", metavar="PATH",
                           help="SVG picture of the resulting diagram; "
                                "optimisers also chart their objective "
                                "next to it")
        return parser


def _fit_document(result, domain, data):
    document = result.diagram.to_dict()
    document.update({
        "seeds": result.X_star,
        "targets": {"v": data.v, "B": data.B},
        "termination": result.termination.value,
        "iterations": len(result.records) - 1,
        "H": result.final.H,
        "f": result.final.f,
        "active_separation_constraints":
            [list(pair) for pair in result.active_separation_constraints],
    })
    return document


class _FitCommandBase(PathValidationMixin, OptimizerMixin, OutputMixin,
                      TargetDataMixin, Command):

    input_args = ("data", "grid", "config")
    output_args = ("out", "svg")
    label = None

    def run_fit(self, parsed_args, domain, data, fit_options):
        raise NotImplementedError

    def take_action(self, parsed_args):
        self.validate_paths(parsed_args)
        domain, data = self.load_target_data(parsed_args)
        objective.check_compatible(domain, data)
        fit_options = options.build_options(parsed_args, domain, data.n)
        self.app.LOG.debug("Running %s on %d cells", self.label, data.n)
        result = self.run_fit(parsed_args, domain, data, fit_options)
        if parsed_args.out:
            self.write_output(parsed_args.out, utils.dump_json(
                _fit_document(result, domain, data)))
            self.write_output(_trace_path(parsed_args.out),
                              utils.dump_trace(result.records))
        if parsed_args.svg:
            self.write_output(parsed_args.svg,
                              svg.render_laguerre(result.diagram, data.B))
            self.write_output(
                _sibling_path(parsed_args.svg, ".trace.svg"),
                svg.render_trace(result.objective_trace, log_scale=True))
        self.summarise(
            "%s: objective=%r iterations=%d min_pair_dist=%r "
            "termination=%s", self.label, result.objective_trace[-1],
            len(result.records) - 1,
            geom2d.min_pairwise_distance(result.X_star),
            result.termination.value)


class Recover(_FitCommandBase):
    """Recover a Laguerre diagram from cell areas and centroids.

    Maximises H from a random initial configuration under the ball and seed
    separation constraints.
    """

    label = "recover"

    def run_fit(self, parsed_args, domain, data, fit_options):
        return fit.recover_diagram(domain, data, rng_seed=parsed_args.seed,
                                   options=fit_options)


class Fit(_FitCommandBase):
    """Fit a Laguerre diagram to target areas and centroids.

    The default method minimises the normalised centroid error starting from
    the target centroids.
    """

    input_args = _FitCommandBase.input_args + ("seeds",)
    label = "fit"

    def get_parser(self, prog_name):
        parser = super(Fit, self).get_parser(prog_name)
        group = parser.add_argument_group("Fitting")
        group.add_argument("--method", choices=("minf", "maxh"),
                           default="minf",
                           help="minimise the centroid error or maximise H "
                                "(default=minf)")
        group.add_argument("--seeds", metavar="CSV",
                           help="initial seeds with header x,y "
                                "(default=the target centroids)")
        return parser

    def run_fit(self, parsed_args, domain, data, fit_options):
        X_init = None
        if parsed_args.seeds:
            X_init = utils.load_seeds(parsed_args.seeds)
        return fit.fit_diagram(domain, data, X_init, fit_options,
                               method=parsed_args.method)


class Synth(PathValidationMixin, OutputMixin, DomainMixin, Command):
    """Generate target data from a random Voronoi diagram.

    Writes the targets CSV to --out, the generating seeds next to it and
    optionally perturbs the centroids keeping the data compatible.
    """

    output_args = ("out", "svg")

    def get_parser(self, prog_name):
        parser = super(Synth, self).get_parser(prog_name)
        group = parser.add_argument_group("Synthetic data")
        group.add_argument("--n", type=int, required=True,
                           help="number of cells")
        group.add_argument("--seed", type=int,
                           help="seed of the random number generator")
        group.add_argument("--epsilon", type=float, default=0.0,
                           help="size of the centroid perturbation "
                                "(default=0)")
        return parser

    def take_action(self, parsed_args):
        self.validate_paths(parsed_args)
        domain = self.get_domain(parsed_args)
        self.app.LOG.debug("Generating %d cells", parsed_args.n)
        seeds, data, diagram = synth.random_voronoi_data(
            domain, parsed_args.n, parsed_args.seed)
        targets = data
        if parsed_args.epsilon:
            spec = synth.PerturbationSpec(parsed_args.epsilon,
                                          parsed_args.seed)
            targets = synth.perturb_data(data, spec, domain)
        if parsed_args.out:
            self.write_output(parsed_args.out,
                              utils.dump_targets(targets.v, targets.B))
            self.write_output(_sibling_path(parsed_args.out, ".seeds.csv"),
                              utils.dump_seeds(seeds))
        if parsed_args.svg:
            self.write_output(parsed_args.svg,
                              svg.render_laguerre(diagram, targets.B))
        self.summarise("synth: n=%d epsilon=%r min_pair_dist=%r",
                       data.n, parsed_args.epsilon,
                       geom2d.min_pairwise_distance(seeds))


class OTSolve(PathValidationMixin, OutputMixin, TargetDataMixin, Command):
    """Solve the semi-discrete transport problem for fixed seeds.

    Finds the weights whose Laguerre cells have the target areas.
    """

    input_args = ("data", "grid", "seeds")
    output_args = ("out", "svg")

    def get_parser(self, prog_name):
        parser = super(OTSolve, self).get_parser(prog_name)
        group = parser.add_argument_group("Transport")
        group.add_argument("--seeds", metavar="CSV",
                           help="seeds with header x,y "
                                "(default=the target centroids)")
        group.add_argument("--tol-percent", type=float,
                           default=sdot.DEFAULT_TOL_PERCENT,
                           help="maximum relative area error in percent "
                                "(default=%(default)s)")
        return parser

    def take_action(self, parsed_args):
        self.validate_paths(parsed_args)
        domain, data = self.load_target_data(parsed_args)
        seeds = data.B
        if parsed_args.seeds:
            seeds = utils.load_seeds(parsed_args.seeds)
        report = sdot.solve_weights(domain, seeds, data.v,
                                    tol_percent=parsed_args.tol_percent)
        if parsed_args.out:
            document = report.diagram.to_dict()
            document.update({"iterations": report.iterations,
                             "max_rel_area_error": report.max_rel_area_error,
                             "dual_value": report.dual_value})
            self.write_output(parsed_args.out, utils.dump_json(document))
        if parsed_args.svg:
            self.write_output(parsed_args.svg,
                              svg.render_laguerre(report.diagram, data.B))
        self.summarise("ot-solve: iterations=%d max_rel_area_error=%r%% "
                       "min_pair_dist=%r", report.iterations,
                       report.max_rel_area_error,
                       geom2d.min_pairwise_distance(report.diagram.seeds))


class Check(PathValidationMixin, OutputMixin, TargetDataMixin, Command):
    """Check necessary conditions for a compatible diagram to exist.

    A failed check proves that no Laguerre diagram has the given areas and
    centroids. With --seeds the cyclical monotonicity of the seed and
    centroid pairs is checked as well.
    """

    input_args = ("data", "grid", "seeds")
    output_args = ("out",)

    def get_parser(self, prog_name):
        parser = super(Check, self).get_parser(prog_name)
        group = parser.add_argument_group("Checks")
        group.add_argument("--seeds", metavar="CSV",
                           help="seeds to check for cyclical monotonicity")
        group.add_argument("--max-subset-size", type=int, choices=(2, 3),
                           default=2,
                           help="longest cycle checked (default=2)")
        return parser

    def take_action(self, parsed_args):
        self.validate_paths(parsed_args)
        domain, data = self.load_target_data(parsed_args)
        objective.check_compatible(domain, data)
        report = fit.check_necessary_conditions(domain, data)
        document = {
            "all_pass": report.all_pass,
            "r": report.r,
            "boundary_margins": report.boundary_margins,
            "pairwise_margins": [[i, j, margin] for (i, j), margin
                                 in sorted(report.pairwise_margins.items())],
            "cuboid_bounds_ok": report.cuboid_bounds_ok,
        }
        if parsed_args.seeds:
            seeds = utils.load_seeds(parsed_args.seeds)
            pairwise_ok, violations = fit.check_cyclical_monotonicity(
                data.B, seeds, parsed_args.max_subset_size)
            document["cyclically_monotone"] = pairwise_ok
            document["monotonicity_violations"] = [
                [list(indices), deficit] for indices, deficit in violations]
        if parsed_args.out:
            self.write_output(parsed_args.out, utils.dump_json(document))
        self.summarise("check: all_pass=%s min_boundary_margin=%r",
                       str(report.all_pass).lower(),
                       float(min(report.boundary_margins)))


class Ingest(PathValidationMixin, Command):
    """Convert a grain label grid to target areas and centroids."""

    input_args = ("grid",)
    output_args = ("out",)

    def get_parser(self, prog_name):
        parser = super(Ingest, self).get_parser(prog_name)
        parser.add_argument("--grid", metavar="TXT", required=True,
                            help="grain label grid")
        parser.add_argument("--out", metavar="CSV",
                            help="targets CSV with header v,bx,by")
        return parser

    def take_action(self, parsed_args):
        self.validate_paths(parsed_args)
        grid = ingest.load_label_grid(parsed_args.grid)
        domain, data = ingest.grid_to_targets(grid)
        if parsed_args.out:
            self.write_output(parsed_args.out,
                              utils.dump_targets(data.v, data.B))
        self.summarise("ingest: n=%d domain=%rx%r pixels=%d", data.n,
                       domain.width, domain.height, grid.width * grid.height)


class AnisoRecover(PathValidationMixin, OptimizerMixin, OutputMixin,
                   TargetDataMixin, Command):
    """Recover an anisotropic Laguerre diagram on a raster.

    Writes the result to --out and its label grid next to it.
    """

    input_args = ("data", "grid", "config", "anisotropy")
    output_args = ("out", "svg")

    def get_parser(self, prog_name):
        parser = super(AnisoRecover, self).get_parser(prog_name)
        group = parser.add_argument_group("Anisotropy")
        group.add_argument("--anisotropy", metavar="CSV",
                           help="matrices with header a11,a12,a22 "
                                "(default=identity)")
        group.add_argument("--resolution", type=int,
                           help="raster resolution (default=%d)" %
                                aniso.DEFAULT_RESOLUTION)
        return parser

    def take_action(self, parsed_args):
        self.validate_paths(parsed_args)
        domain, data = self.load_target_data(parsed_args)
        objective.check_compatible(domain, data)
        matrices = None
        if parsed_args.anisotropy:
            matrices = utils.load_anisotropy(parsed_args.anisotropy)
        fit_options = options.build_options(parsed_args, domain, data.n)
        seeds, raster, trace = aniso.recover_aniso(
            domain, data, matrices, fit_options, rng_seed=parsed_args.seed,
            resolution=options.get_resolution(parsed_args))
        if parsed_args.out:
            document = {
                "domain": domain.to_dict(),
                "seeds": seeds,
                "weights": raster.weights,
                "anisotropy": raster.anisotropy.A,
                "areas": raster.areas,
                "centroids": raster.centroids,
                "resolution": raster.grid.resolution,
                "termination": trace.termination.value,
                "iterations": len(trace.records) - 1,
            }
            self.write_output(parsed_args.out, utils.dump_json(document))
            self.write_output(_trace_path(parsed_args.out),
                              utils.dump_trace(trace.records))
            if raster.grid.pixel_width == raster.grid.pixel_height:
                self.write_output(
                    _sibling_path(parsed_args.out, ".labels.txt"),
                    ingest.format_label_grid(
                        aniso.raster_to_label_grid(raster)))
        if parsed_args.svg:
            self.write_output(parsed_args.svg,
                              svg.render_raster(raster, data.B))
            self.write_output(
                _sibling_path(parsed_args.svg, ".trace.svg"),
                svg.render_trace(trace.objective, log_scale=True))
        self.summarise(
            "aniso-recover: objective=%r iterations=%d min_pair_dist=%r "
            "termination=%s", trace.objective[-1], len(trace.records) - 1,
            geom2d.min_pairwise_distance(seeds), trace.termination.value)
