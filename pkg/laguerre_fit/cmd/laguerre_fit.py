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

import json
import sys

from cliff.app import App
from cliff.commandmanager import CommandManager

from laguerre_fit import exception

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3


def exit_code(err):
    """Exit status for an exception raised by a command."""
    if isinstance(err, exception.DataError):
        return EXIT_DATA
    if isinstance(err, exception.SolverError):
        return EXIT_SOLVER
    return EXIT_USAGE


def error_kind(err):
    if isinstance(err, exception.Error):
        return err.__class__.__name__
    return "UsageError"


class LaguerreFitApp(App):

    def __init__(self):
        super(LaguerreFitApp, self).__init__(
            description='Laguerre diagram recovery and fitting',
            version='0.1',
            command_manager=CommandManager('laguerre_fit.cli'),
            deferred_help=True,
        )
        self.last_error = None

    def initialize_app(self, argv):
        self.LOG.debug('initialize_app')

    def prepare_to_run_command(self, cmd):
        self.LOG.debug('prepare_to_run_command %s', cmd.__class__.__name__)

    def clean_up(self, cmd, result, err):
        self.LOG.debug('clean_up %s', cmd.__class__.__name__)
        if err:
            self.LOG.debug('got an error: %s', err)
            self.last_error = err

    def report_error(self, code, kind, message):
        """Write the machine readable error line to stderr."""
        line = json.dumps({"exit": code, "kind": kind,
                           "message": str(message)}, sort_keys=True)
        self.stderr.write("error: %s\n" % line)
        self.stderr.flush()

    def run_subcommand(self, argv):
        self.last_error = None
        try:
            self.command_manager.find_command(argv)
        except ValueError as err:
            self.LOG.error(err)
            self.report_error(EXIT_USAGE, "UsageError", err)
            return EXIT_USAGE
        try:
            result = super(LaguerreFitApp, self).run_subcommand(argv)
        except SystemExit as err:
            if not err.code:
                return 0
            self.report_error(EXIT_USAGE, "UsageError",
                              "invalid arguments or paths")
            return EXIT_USAGE
        if self.last_error is not None:
            code = exit_code(self.last_error)
            self.report_error(code, error_kind(self.last_error),
                              self.last_error)
            return code
        if result:
            self.report_error(EXIT_USAGE, "UsageError", "command failed")
            return EXIT_USAGE
        return result


def main(argv=sys.argv[1:]):
    myapp = LaguerreFitApp()
    return myapp.run(argv)


if __name__ == '__main__':
    sys.exit(main(sys.argv[1:]))
