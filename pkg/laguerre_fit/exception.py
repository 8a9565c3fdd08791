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


class Error(Exception):
    """Base class for laguerre_fit exceptions."""


class DataError(Error):
    """Input data is malformed or violates a compatibility identity."""


class SolverError(Error):
    """A numerical solver failed to produce a result."""


class InvalidInput(DataError):
    pass


class IncompatibleData(DataError):
    pass


class EmptyGrid(DataError):
    pass


class ParseError(DataError):

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        location = []
        if line is not None:
            location.append("line %d" % line)
        if column is not None:
            location.append("column %d" % column)
        if location:
            message = "%s (%s)" % (message, ", ".join(location))
        super(ParseError, self).__init__(message)


class CentroidLeftDomain(DataError):

    def __init__(self, indices):
        self.indices = list(indices)
        super(CentroidLeftDomain, self).__init__(
            "Perturbed centroids left the domain: %s" %
            ", ".join(str(i) for i in self.indices))


class MaxIterationsExceeded(SolverError):
    pass


class CoincidentSeeds(SolverError):
    pass


class DegenerateStart(SolverError):
    pass


class DegenerateSampling(SolverError):
    pass


class InfeasibleStart(SolverError):
    pass


class LineSearchFailure(SolverError):
    pass


class StepTooLarge(SolverError):
    pass


class ResolutionTooCoarse(SolverError):
    pass
