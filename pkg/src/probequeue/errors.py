"""Typed errors with machine-readable categories.

Every error the library raises deliberately carries a short category
string; the CLI maps categories to exit codes and prints them on stderr
so callers can branch without parsing prose.
"""

from __future__ import annotations


class ProbeQueueError(Exception):
    """Base class for all library errors."""

    category = "error"


class ParameterError(ProbeQueueError):
    """An argument is outside its documented domain."""

    category = "parameter"


class ConfigError(ProbeQueueError):
    """A configuration object or file is invalid."""

    category = "config"


class DegenerateDemandError(ProbeQueueError):
    """Both expected lane accumulations are zero; ratios are undefined."""

    category = "degenerate-demand"


class NoCommonFlowError(ProbeQueueError):
    """No lane-flexible flow exists, so assignment optimization is meaningless."""

    category = "no-common-flow"


class TruncationError(ProbeQueueError):
    """The requested grid bound leaves more tail mass than allowed."""

    category = "truncation"


class InfeasibleObservationError(ProbeQueueError):
    """The conditioning event has zero probability on the whole grid."""

    category = "infeasible-observation"


# CLI exit codes per category.  0 is success; 1 is reserved for unexpected
# crashes; 2 is argparse usage errors.
EXIT_CODES = {
    "parameter": 3,
    "config": 4,
    "degenerate-demand": 5,
    "no-common-flow": 5,
    "truncation": 6,
    "infeasible-observation": 6,
    "io": 7,
    "error": 8,
}


def exit_code_for(err: Exception) -> int:
    if isinstance(err, ProbeQueueError):
        return EXIT_CODES.get(err.category, EXIT_CODES["error"])
    if isinstance(err, OSError):
        return EXIT_CODES["io"]
    return 1
