import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from gwr_calibration.misc.exceptions import ConfigError, InvalidInputError
from gwr_calibration.models.geo import Geo, Position

TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class KernelSpec:
    """
    Weight function settings.

    Attributes:
        kind: "gaussian" (spatial only) or "gtwr" (spatial times hour-of-day factor).
        bandwidth: B in meters, the distance at which the spatial weight equals exp(-0.5).
        time_exponent: Exponent of the hour distance in the gtwr factor, fixed at 3.
        circular_hours: Measure hour distance around midnight. Off by default.
    """

    kind: str = "gaussian"
    bandwidth: float = 1460.0
    time_exponent: int = 3
    circular_hours: bool = False

    def __post_init__(self):
        if self.kind not in ("gaussian", "gtwr"):
            raise ConfigError("Unknown kernel kind '{}'".format(self.kind))
        if not self.bandwidth > 0:
            raise ConfigError("Kernel bandwidth must be > 0, got {}".format(self.bandwidth))
        if self.time_exponent != 3:
            raise ConfigError("The gtwr time exponent is fixed at 3")

    @property
    def decay(self) -> float:
        """lambda of w = exp(-lambda d^2), equal to 1 / (2 B^2)."""
        return 1.0 / (2.0 * self.bandwidth ** 2)

    def with_bandwidth(self, bandwidth: float) -> "KernelSpec":
        return KernelSpec(self.kind, bandwidth, self.time_exponent, self.circular_hours)


class Kernel:
    """
    Spatial and spatio-temporal weights. Weights are never truncated to zero.
    """

    def __init__(self, spec: KernelSpec, log_level: int = logging.INFO):
        self.logger = logging.getLogger("Kernel")
        self.logger.setLevel(log_level)
        self.spec = spec

    @staticmethod
    def gaussian_weight(s: Position, s_j: Position, bandwidth: float) -> float:
        """
        exp(-0.5 * ||s - s_j||^2 / B^2).

        Raises:
            InvalidInputError: If the bandwidth is not positive.
        """
        if not bandwidth > 0:
            raise InvalidInputError("Bandwidth must be > 0, got {}".format(bandwidth))
        d = Geo.distance(s, s_j)
        return max(float(np.exp(-0.5 * (d / bandwidth) ** 2)), TINY)

    @staticmethod
    def hour_distance(h, h_t, circular: bool = False):
        diff = np.abs(np.asarray(h, dtype=float) - np.asarray(h_t, dtype=float))
        if circular:
            diff = np.minimum(diff, 24.0 - diff)
        return diff

    @staticmethod
    def time_factor(h, h_t, circular: bool = False, exponent: int = 3):
        """1 / (1 + |h - h_t|^3)."""
        return 1.0 / (1.0 + Kernel.hour_distance(h, h_t, circular) ** exponent)

    @staticmethod
    def gtwr_weight(s: Position, s_j: Position, bandwidth: float, h: float, h_t: float,
                    circular: bool = False) -> float:
        """
        Gaussian spatial weight times the hour-of-day factor 1 / (1 + |h - h_t|^3).

        Raises:
            InvalidInputError: If the bandwidth is not positive or an hour is outside [0, 24).
        """
        for hour in (h, h_t):
            if not 0 <= hour < 24:
                raise InvalidInputError("Hour of day must lie in [0, 24), got {}".format(hour))
        return Kernel.gaussian_weight(s, s_j, bandwidth) * float(Kernel.time_factor(h, h_t, circular))

    def log_site_weights(self, target: Position, positions: Sequence[Position]) -> np.ndarray:
        """Natural log of the spatial weight of each site position as seen from target."""
        d = Geo.distances(target, positions)
        return -0.5 * (d / self.spec.bandwidth) ** 2

    def site_weights(self, target: Position, positions: Sequence[Position]) -> np.ndarray:
        """Spatial weight of each site position, floored at the smallest positive float."""
        return np.maximum(np.exp(self.log_site_weights(target, positions)), TINY)

    def row_weights(self, target: Position, site_positions: Sequence[Position], site_codes: np.ndarray,
                    row_hours: Optional[Sequence[float]] = None, target_hour: Optional[float] = None,
                    normalize: bool = False) -> np.ndarray:
        """
        Row weights when rows are already coded by site.

        Args:
            target: Position where the local model is estimated.
            site_positions: Position of each distinct site.
            site_codes: For each row, the index of its site in site_positions.
            row_hours: Hour of day of each row, required by the gtwr kernel.
            target_hour: Hour of day the gtwr model is built for.
            normalize: Divide by the largest weight (computed in log space). Estimates are
                unchanged by a common factor, and far targets no longer underflow.

        Returns:
            A float array of strictly positive weights, one per row.
        """
        site_codes = np.asarray(site_codes, dtype=int)
        if site_codes.size == 0:
            return np.zeros(0)
        log_w = self.log_site_weights(target, site_positions)[site_codes]

        if self.spec.kind == "gtwr":
            if row_hours is None or target_hour is None:
                raise InvalidInputError("The gtwr kernel needs row hours and a target hour")
            log_w = log_w + np.log(self.time_factor(
                target_hour, np.asarray(row_hours, dtype=float), self.spec.circular_hours,
                self.spec.time_exponent
            ))

        if normalize:
            log_w = log_w - log_w.max()
        return np.maximum(np.exp(log_w), TINY)

    def weight_vector(self, target: Position, row_positions: Sequence[Position],
                      row_hours: Optional[Sequence[float]] = None,
                      target_hour: Optional[float] = None,
                      normalize: bool = False) -> np.ndarray:
        """
        One weight per observation row. Rows of the same site repeat the site weight.

        Args:
            target: Position where the local model is estimated.
            row_positions: Position of the site of each observation row.
            row_hours: Hour of day of each row, required by the gtwr kernel.
            target_hour: Hour of day the gtwr model is built for.
            normalize: See row_weights.

        Returns:
            A float array of strictly positive weights.
        """
        unique = {}
        codes = np.array([unique.setdefault(p, len(unique)) for p in row_positions], dtype=int)
        return self.row_weights(target, list(unique), codes, row_hours, target_hour, normalize)
