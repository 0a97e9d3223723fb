from typing import Iterable, Optional


class GwrCalibrationError(Exception):
    """
    Base class of every error raised by the calibration library.

    Attributes:
        exit_code: The process exit code the command line maps this error to.
    """

    exit_code = 1


class ConfigError(GwrCalibrationError):
    """Invalid, unknown or missing configuration."""

    exit_code = 1


class DataError(GwrCalibrationError):
    """The input data cannot support the requested operation."""

    exit_code = 2


class InvalidInputError(DataError):
    """A value is outside its admissible range (coordinates, pressure, temperature...)."""


class MissingColumnError(DataError):
    """A mandatory column is absent from a delimited input file."""

    def __init__(self, column: str, path: str = ""):
        self.column = column
        self.path = path
        super().__init__("Missing mandatory column '{}' in {}".format(column, path or "input"))


class RenameError(DataError):
    """Device ids that are neither mapped nor whitelisted."""

    def __init__(self, unknown_ids: Iterable[str]):
        self.unknown_ids = sorted(set(unknown_ids))
        super().__init__("Unmapped device ids: {}".format(", ".join(self.unknown_ids)))


class UnknownSiteError(DataError):
    """Records reference a site that is absent from the site registry."""

    def __init__(self, site_ids: Iterable[str]):
        self.site_ids = sorted(set(site_ids))
        super().__init__("Sites missing from the registry: {}".format(", ".join(self.site_ids)))


class InsufficientDataError(DataError):
    """Not enough rows (or no overlapping hours) to fit or score."""


class DegenerateVariableError(DataError):
    """A variable has zero variance at a site, so it cannot be standardized."""

    def __init__(self, site: str, variable: str):
        self.site = site
        self.variable = variable
        super().__init__("Zero variance for variable {} at site {}".format(variable, site))


class NumericalError(GwrCalibrationError):
    """A numerical procedure failed."""

    exit_code = 3


class SingularFitError(NumericalError):
    """The weighted normal matrix is not positive definite within tolerance."""

    def __init__(self, condition: float, target: Optional[str] = None):
        self.condition = condition
        self.target = target
        where = " at target {}".format(target) if target else ""
        super().__init__(
            "Singular weighted fit{} (condition estimate {:.3e})".format(where, condition)
        )
