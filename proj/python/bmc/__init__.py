"""Python front end for the bmc tools.

Every helper maps keyword arguments onto the command-line flags of the same
name, so ``variance(kernel="two_state", p=0.8)`` runs
``bmc variance --kernel two_state --p 0.8``.
"""

import csv
import io
import json

from ._bmc import critical_two_state_p, rate, run

__all__ = ["BmcError", "run", "rate", "critical_two_state_p", "command", "variance", "spectral", "simulate"]


class BmcError(RuntimeError):
    def __init__(self, code, message):
        super().__init__(message.strip())
        self.code = code


def _flags(options):
    args = []
    for key, value in options.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(repr(float(v)) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        args += ["--" + key.replace("_", "-"), str(value)]
    return args


def command(name, **options):
    """Runs a subcommand and returns its standard output; raises BmcError on failure."""
    code, out, err = run([name] + _flags(options))
    if code != 0:
        raise BmcError(code, err)
    return out


def variance(**options):
    return json.loads(command("variance", **options))


def spectral(**options):
    return json.loads(command("spectral", **options))


def simulate(**options):
    """Per-replica values of N as a list of floats."""
    rows = csv.DictReader(io.StringIO(command("simulate", **options)))
    return [float(r["value"]) for r in rows]
