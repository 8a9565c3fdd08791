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

"""Recovering and fitting Laguerre diagrams from areas and centroids.

Recovery maximises H under a ball constraint and pairwise seed separation
constraints; fitting minimises the normalised centroid error
``n**2 / area**3 * f`` under the separation constraints only. Both use
:func:`constrained_optimize`, an augmented Lagrangian method whose
subproblems are solved by L-BFGS-B.
"""

import collections
import collections.abc
import dataclasses
import enum
import itertools
import logging

import numpy as np
import scipy.optimize
from scipy.spatial import distance

from laguerre_fit import exception
from laguerre_fit import geom2d
from laguerre_fit import objective
from laguerre_fit import synth

LOG = logging.getLogger(__name__)

# Violation above which a start point counts as infeasible.
_INFEASIBLE_START = 1e-2

# Accepted steps with small objective change needed to declare convergence.
_SMALL_STEPS = 5

# Consecutive failed line searches before a run is declared stalled.
_STALL_ROUNDS = 3

# Activity threshold for c_ij, relative to delta**2.
ACTIVE_TOL = 1e-10

# Default ftol of recovery and fitting, relative to the starting objective.
MAXH_FTOL = 1e-13
MINF_FTOL = 1e-10

# Smallest objective scale, relative to area * diameter**2 for H.
MIN_H_SCALE = 1e-6
_MIN_F_SCALE = 1e-12


class Termination(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    STALLED = "Stalled"


@dataclasses.dataclass
class FitOptions:
    """Options of the constrained optimisers.

    ``None`` values are filled from the domain and target data by
    :func:`default_options` and at the start of a run.
    """

    delta: float = None
    radius: float = None
    ftol: float = None
    max_iters: int = 1000
    ot_tol_percent: float = objective.DEFAULT_OT_TOL_PERCENT
    penalty_initial: float = 10.0
    penalty_factor: float = 10.0
    penalty_max: float = 1e8
    round_iters: int = 50
    feas_tol: float = 1e-8
    gtol: float = 1e-12

    def __post_init__(self):
        for name in ("delta", "radius", "ftol"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise exception.InvalidInput("%s must be positive" % name)
        if self.max_iters < 1:
            raise exception.InvalidInput("max_iters must be positive")


def default_options(domain, n, **overrides):
    """FitOptions with delta and R derived from the domain."""
    options = FitOptions(**overrides)
    if options.delta is None:
        options.delta = 1e-3 * domain.width
    if options.radius is None:
        options.radius = float(np.sqrt(domain.area * n))
    return options


@dataclasses.dataclass(frozen=True)
class Constraint:
    """Inequality constraints ``values(x) >= 0`` on a flat vector.

    ``vjp(x, y)`` returns the gradient of ``y . values(x)``.
    """

    name: str
    values: collections.abc.Callable
    vjp: collections.abc.Callable


def separation_constraint(n, delta):
    """``c_ij = |x_i - x_j|**2 - delta**2`` for all pairs i < j."""

    def values(x):
        if n < 2:
            return np.zeros(0)
        return distance.pdist(x.reshape(n, 2), "sqeuclidean") - delta ** 2

    def vjp(x, y):
        if n < 2:
            return np.zeros_like(x)
        seeds = x.reshape(n, 2)
        weights = distance.squareform(y)
        grad = 2.0 * (weights.sum(axis=1)[:, None] * seeds -
                      weights @ seeds)
        return grad.reshape(-1)

    return Constraint("separation", values, vjp)


def ball_constraint(center, radius):
    """``c_ball = R**2 - sum |x_i - center|**2``."""
    center = np.asarray(center, dtype=float)

    def values(x):
        offsets = x.reshape(-1, 2) - center
        return np.array([radius ** 2 - np.sum(offsets ** 2)])

    def vjp(x, y):
        return (-2.0 * y[0] * (x.reshape(-1, 2) - center)).reshape(-1)

    return Constraint("ball", values, vjp)


def active_pairs(seeds, delta, tol=ACTIVE_TOL):
    """Pairs whose separation constraint is active."""
    seeds = np.asarray(seeds, dtype=float)
    if len(seeds) < 2:
        return []
    slack = distance.pdist(seeds, "sqeuclidean") - delta ** 2
    pairs = zip(*np.triu_indices(len(seeds), k=1))
    return [(int(i), int(j)) for (i, j), s in zip(pairs, slack)
            if s < tol * delta ** 2]


@dataclasses.dataclass
class OptimizeTrace:
    """Per-iteration records of a constrained run."""

    records: list = dataclasses.field(default_factory=list)
    termination: Termination = Termination.MAX_ITERS
    iterations: int = 0

    @property
    def objective(self):
        return [record["objective"] for record in self.records]


def _violation(constraints, x):
    worst = 0.0
    for constraint in constraints:
        values = constraint.values(x)
        if values.size:
            worst = max(worst, float(np.max(-values)))
    return worst


def _restore_feasibility(constraints, x0, gtol):
    """Minimise the squared constraint violation from ``x0``."""

    def penalty(x):
        value = 0.0
        grad = np.zeros_like(x)
        for constraint in constraints:
            negative = np.minimum(constraint.values(x), 0.0)
            value += 0.5 * np.sum(negative ** 2)
            grad += constraint.vjp(x, negative)
        return value, grad

    result = scipy.optimize.minimize(penalty, x0, jac=True,
                                     method="L-BFGS-B",
                                     options={"gtol": gtol})
    return result.x


class EvaluationCache(object):
    """Remember recent evaluations so that callbacks reuse them."""

    def __init__(self, fun, size=4):
        self._fun = fun
        self._entries = collections.OrderedDict()
        self._size = size

    def __call__(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if key not in self._entries:
            self._entries[key] = self._fun(np.array(x, dtype=float))
            if len(self._entries) > self._size:
                self._entries.popitem(last=False)
        return self._entries[key]


def constrained_optimize(fun, constraints, x0, options=None, maximize=False,
                         monitor=None, scale=1.0):
    """Optimise ``fun`` subject to ``c(x) >= 0`` for every constraint.

    :param fun: callable returning ``(value, gradient)`` for a flat vector.
    :param constraints: list of :class:`Constraint`.
    :param maximize: maximise instead of minimise.
    :param monitor: optional callable ``monitor(x) -> dict`` whose entries
        are added to each trace record.
    :param scale: typical magnitude of ``fun``. The optimiser works on
        ``fun / scale`` and ``ftol`` is relative to ``max(|fun|, scale)``.
    :returns: ``(x_star, OptimizeTrace)``.
    """
    options = options or FitOptions()
    sign = -1.0 if maximize else 1.0
    x = np.array(x0, dtype=float).reshape(-1)
    ftol = options.ftol if options.ftol is not None else 1e-12
    if not scale > 0:
        raise exception.InvalidInput("The objective scale must be positive")

    if _violation(constraints, x) > options.feas_tol:
        x = _restore_feasibility(constraints, x, options.gtol)
        violation = _violation(constraints, x)
        if violation > _INFEASIBLE_START:
            raise exception.InfeasibleStart(
                "Start point violates the constraints by %g" % violation)

    evaluate = EvaluationCache(fun)
    multipliers = [np.zeros_like(c.values(x)) for c in constraints]
    penalty = options.penalty_initial
    trace = OptimizeTrace()

    def augmented(z):
        value, grad = evaluate(z)
        total = sign * value / scale
        total_grad = sign / scale * np.asarray(grad, dtype=float).reshape(-1)
        for constraint, lam in zip(constraints, multipliers):
            shifted = np.maximum(lam - penalty * constraint.values(z), 0.0)
            total += (np.sum(shifted ** 2) - np.sum(lam ** 2)) / (
                2.0 * penalty)
            total_grad -= constraint.vjp(z, shifted)
        return total, total_grad

    def record(z):
        value, _ = evaluate(z)
        entry = {"iteration": len(trace.records), "objective": float(value),
                 "penalty": penalty}
        if monitor is not None:
            entry.update(monitor(z))
        trace.records.append(entry)

    def small_steps():
        values = trace.objective[-(_SMALL_STEPS + 1):]
        if len(values) <= _SMALL_STEPS:
            return False
        return all(abs(b - a) / max(abs(b), scale) < ftol
                   for a, b in zip(values, values[1:]))

    record(x)
    failures = 0
    previous = None
    while trace.iterations < options.max_iters:
        maxiter = min(options.round_iters,
                      options.max_iters - trace.iterations)
        start = x
        result = scipy.optimize.minimize(
            augmented, x, jac=True, method="L-BFGS-B", callback=record,
            options={"maxiter": maxiter, "ftol": ftol, "gtol": options.gtol})
        trace.iterations += max(int(result.nit), 1)
        x = result.x
        violation = _violation(constraints, x)
        value = evaluate(x)[0]
        LOG.debug("Round at iteration %d: objective %r, violation %g, "
                  "penalty %g", trace.iterations, value, violation, penalty)

        if result.status == 2 and not np.any(x != start):
            failures += 1
        else:
            failures = 0
        if failures >= _STALL_ROUNDS:
            if len(trace.records) <= 1:
                raise exception.LineSearchFailure(
                    "No step was accepted: %s" % result.message)
            trace.termination = Termination.STALLED
            break

        for k, constraint in enumerate(constraints):
            multipliers[k] = np.maximum(
                multipliers[k] - penalty * constraint.values(x), 0.0)
        feasible = violation <= options.feas_tol
        if not feasible:
            penalty = min(penalty * options.penalty_factor,
                          options.penalty_max)
        if feasible and (small_steps() or (
                result.success and previous is not None and
                abs(value - previous) / max(abs(value), scale) < ftol)):
            trace.termination = Termination.CONVERGED
            break
        previous = value

    if _violation(constraints, x) > options.feas_tol:
        LOG.warning("Optimiser finished %g outside the feasible set",
                    _violation(constraints, x))
    return x, trace


@dataclasses.dataclass(frozen=True)
class FitResult:
    """Outcome of a recovery or fitting run."""

    X_star: np.ndarray
    diagram: geom2d.LaguerreDiagram
    objective_trace: list
    min_pairwise_distance_trace: list
    active_separation_constraints: list
    termination: Termination
    records: list
    final: objective.ObjectiveEval


def _monitor(evaluate, n, delta):
    def monitor(x):
        result = evaluate(x)
        seeds = x.reshape(n, 2)
        return {"f": result.f,
                "min_pair_dist_over_delta":
                    geom2d.min_pairwise_distance(seeds) / delta,
                "active_constraints": len(active_pairs(seeds, delta))}
    return monitor


def _result(problem, x, trace, delta):
    seeds = x.reshape(-1, 2)
    final = problem.evaluate(seeds)
    return FitResult(
        X_star=seeds, diagram=final.dual.diagram,
        objective_trace=trace.objective,
        min_pairwise_distance_trace=[
            r.get("min_pair_dist_over_delta", np.inf) * delta
            for r in trace.records],
        active_separation_constraints=active_pairs(seeds, delta),
        termination=trace.termination, records=trace.records, final=final)


def _single_cell(problem, seeds):
    final = problem.evaluate(seeds)
    record = {"iteration": 0, "objective": final.H, "penalty": 0.0,
              "f": final.f, "min_pair_dist_over_delta": np.inf,
              "active_constraints": 0}
    return FitResult(X_star=seeds, diagram=final.dual.diagram,
                     objective_trace=[final.H],
                     min_pairwise_distance_trace=[np.inf],
                     active_separation_constraints=[],
                     termination=Termination.CONVERGED, records=[record],
                     final=final)


def maximize_H_constrained(domain, data, X_init=None, options=None):
    """Maximise H over the ball with pairwise separation constraints.

    The default start is the target centroids.
    """
    options = options or default_options(domain, data.n)
    problem = objective.Objective(domain, data, options.ot_tol_percent)
    seeds = geom2d.as_seeds(data.B if X_init is None else X_init)
    if data.n == 1:
        return _single_cell(problem, seeds)
    if options.ftol is None:
        options = dataclasses.replace(options, ftol=MAXH_FTOL)
    scale = max(abs(problem.evaluate(seeds).H),
                MIN_H_SCALE * domain.area * domain.diameter ** 2)

    evaluate = EvaluationCache(
        lambda x: problem.evaluate(x.reshape(-1, 2)))

    def fun(x):
        result = evaluate(x)
        if result.grad_H is None:
            raise exception.CoincidentSeeds("Seeds collided during the fit")
        return result.H, result.grad_H.reshape(-1)

    constraints = [ball_constraint(domain.centroid, options.radius),
                   separation_constraint(data.n, options.delta)]
    x, trace = constrained_optimize(
        fun, constraints, seeds.reshape(-1), options, maximize=True,
        monitor=_monitor(evaluate, data.n, options.delta), scale=scale)
    LOG.info("H maximisation finished (%s) after %d iterations, H = %r",
             trace.termination.value, trace.iterations, trace.objective[-1])
    return _result(problem, x, trace, options.delta)


def recover_diagram(domain, data, X_init=None, rng_seed=None, options=None):
    """Recover the compatible diagram of ``(v, B)`` from a random start."""
    if X_init is None:
        rng = synth.make_rng(rng_seed)
        X_init = synth.sample_uniform(domain, data.n, rng)
    return maximize_H_constrained(domain, data, X_init, options)


def fit_diagram(domain, data, X_init=None, options=None, method="minf"):
    """Fit a diagram to ``(v, B)``.

    ``minf`` minimises ``n**2 / area**3 * f`` under the separation
    constraints; ``maxh`` maximises H as in recovery. Both start from the
    target centroids by default.
    """
    if method == "maxh":
        return maximize_H_constrained(domain, data, X_init, options)
    if method != "minf":
        raise exception.InvalidInput("Unknown fitting method %r" % method)
    options = options or default_options(domain, data.n)
    problem = objective.Objective(domain, data, options.ot_tol_percent)
    seeds = geom2d.as_seeds(data.B if X_init is None else X_init)
    if data.n == 1:
        return _single_cell(problem, seeds)
    normalise = data.n ** 2 / domain.area ** 3
    if options.ftol is None:
        options = dataclasses.replace(options, ftol=MINF_FTOL)
    evaluate = EvaluationCache(
        lambda x: problem.evaluate(x.reshape(-1, 2)))

    def fun(x):
        result = evaluate(x)
        if result.f is None:
            raise exception.CoincidentSeeds("Seeds collided during the fit")
        gradient = problem.grad_f_hessian(x.reshape(-1, 2),
                                          gradient=result.grad_H)
        return normalise * result.f, normalise * gradient.reshape(-1)

    scale = max(normalise * problem.eval_f(seeds), _MIN_F_SCALE)
    x, trace = constrained_optimize(
        fun, [separation_constraint(data.n, options.delta)],
        seeds.reshape(-1), options,
        monitor=_monitor(evaluate, data.n, options.delta), scale=scale)
    LOG.info("f minimisation finished (%s) after %d iterations, "
             "normalised f = %r", trace.termination.value, trace.iterations,
             trace.objective[-1])
    return _result(problem, x, trace, options.delta)


@dataclasses.dataclass
class NecessaryReport:
    """Necessary conditions for a compatible diagram to exist."""

    boundary_margins: np.ndarray
    pairwise_margins: dict
    r: np.ndarray
    cuboid_bounds_ok: np.ndarray
    all_pass: bool


def check_necessary_conditions(domain, data):
    """Evaluate the centroid-separation and boundary-distance bounds.

    A failed check proves that no compatible diagram exists; a passed check
    proves nothing.
    """
    v, B = data.v, data.B
    r = v / (4.0 * domain.diameter)
    boundary = np.array([domain.boundary_distance(b) for b in B]) - r
    pairwise = {}
    for i, j in itertools.combinations(range(data.n), 2):
        pairwise[(i, j)] = float(np.linalg.norm(B[i] - B[j]) - r[i] - r[j])
    cuboid = np.ones((data.n, 2), dtype=bool)
    if domain.is_rectangle:
        lo = np.array(domain.bounds[:2])
        sides = np.array([domain.width, domain.height])
        margin = v[:, None] * sides[None, :] / (2.0 * domain.area)
        tol = 1e-12 * domain.diameter
        cuboid = ((B - lo >= margin - tol) &
                  (lo + sides - B >= margin - tol))
    all_pass = bool(np.all(boundary >= -1e-12) and
                    all(m >= -1e-12 for m in pairwise.values()) and
                    np.all(cuboid))
    return NecessaryReport(boundary, pairwise, r, cuboid, all_pass)


def check_cyclical_monotonicity(B, X, max_subset_size=2):
    """Check ``(b_i - b_j) . (x_i - x_j) >= 0`` and optionally 3-cycles.

    :returns: ``(pairwise_ok, violations)`` where each violation is
        ``(indices, deficit)``.
    """
    B = np.asarray(B, dtype=float)
    X = np.asarray(X, dtype=float)
    if B.shape != X.shape:
        raise exception.InvalidInput("B and X must have the same shape")
    if max_subset_size not in (2, 3):
        raise exception.InvalidInput("max_subset_size must be 2 or 3")
    violations = []
    for i, j in itertools.combinations(range(len(B)), 2):
        value = float(np.dot(B[i] - B[j], X[i] - X[j]))
        if value < -1e-12:
            violations.append(((i, j), value))
    pairwise_ok = not violations
    if max_subset_size == 3:
        for i, j, k in itertools.combinations(range(len(B)), 3):
            identity = B[i] @ X[i] + B[j] @ X[j] + B[k] @ X[k]
            for cycle in ((j, k, i), (k, i, j)):
                permuted = (B[i] @ X[cycle[0]] + B[j] @ X[cycle[1]] +
                            B[k] @ X[cycle[2]])
                if identity - permuted < -1e-12:
                    violations.append(((i, j, k), float(identity - permuted)))
    return pairwise_ok, violations


def diagram_symmetric_difference(first, second):
    """Per-cell and total area of the symmetric difference of two diagrams.

    Each cell pair contributes ``area(A) + area(B) - 2 area(A & B)``.
    """
    if first.n != second.n:
        raise exception.InvalidInput(
            "Cannot compare diagrams with %d and %d cells" %
            (first.n, second.n))
    per_cell = np.zeros(first.n)
    for i, (a, b) in enumerate(zip(first.cells, second.cells)):
        common = geom2d.polygon_moments(
            geom2d.polygon_intersection(a, b)).area
        per_cell[i] = max(first.areas[i] + second.areas[i] - 2.0 * common,
                          0.0)
    return per_cell, float(np.sum(per_cell))
