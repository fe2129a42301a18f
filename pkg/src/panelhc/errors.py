"""Exception hierarchy for panelhc.

Two broad families matter to callers: problems with the input data or
configuration (bad files, bad column maps, bad experiment settings) and
numerical failures during estimation. The CLI maps the first family to
exit code 1 and the second to exit code 2.
"""

from __future__ import annotations


class PanelError(Exception):
    """Base class for all panelhc errors."""


class ConfigurationError(PanelError):
    """Invalid settings: column maps, experiment parameters, CLI flags."""


class DataError(PanelError):
    """Structurally invalid input data (duplicate keys, missing values)."""


class ParseError(DataError):
    """A cell could not be parsed; message carries the 1-based row number."""


class EstimationError(PanelError):
    """Base class for numerical failures during estimation."""


class SingularDesignError(EstimationError):
    """Demeaned design is rank deficient.

    Attributes
    ----------
    columns : tuple of str
        Names of the columns flagged by the pivoted QR as dependent.
    """

    def __init__(self, message: str, columns: tuple = ()):
        super().__init__(message)
        self.columns = tuple(columns)


class PerfectLeverageError(EstimationError):
    """(I - H_i) is numerically singular for some unit.

    Attributes
    ----------
    unit : object
        Label of the offending unit.
    """

    def __init__(self, message: str, unit=None):
        super().__init__(message)
        self.unit = unit


class DegenerateLeverageError(EstimationError):
    """Average leverage at some time position is zero."""

    def __init__(self, message: str, time=None):
        super().__init__(message)
        self.time = time


class InsufficientDOFError(EstimationError):
    """Residual degrees of freedom are non-positive."""


class RestrictionError(EstimationError):
    """Linear restriction matrix is rank deficient or R V R' is singular."""


class InfiniteStatisticError(EstimationError):
    """Zero variance with a non-zero null deviation: the statistic diverges."""


class ExperimentOrderError(PanelError):
    """Power experiment requested before its size run supplied null statistics."""
