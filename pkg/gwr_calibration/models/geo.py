import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from gwr_calibration.misc.exceptions import InvalidInputError
from gwr_calibration.misc.gwr_calibration_variables import GwrCalibrationVariables


@dataclass(frozen=True)
class Position:
    """Planar position in meters (x east, y north) of the local projection."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError("Non-finite position ({}, {})".format(self.x, self.y))


@dataclass(frozen=True)
class LonLat:
    lon: float
    lat: float


@dataclass(frozen=True)
class BoundingBox:
    """Study area in projected meters."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.max_x > self.min_x and self.max_y > self.min_y):
            raise InvalidInputError("Degenerate bounding box {}".format(self))

    def contains(self, position: Position) -> bool:
        return self.min_x <= position.x <= self.max_x and self.min_y <= position.y <= self.max_y


class Geo:
    """
    Equirectangular local projection and planar distances.

    Raw lon/lat never leave this class: everything downstream consumes Position.
    """

    @staticmethod
    def project(lon: float, lat: float, origin: LonLat, bbox: Optional[BoundingBox] = None) -> Position:
        """
        Projects a lon/lat pair onto the local plane centered on origin.

        Args:
            lon: Longitude in degrees.
            lat: Latitude in degrees.
            origin: Projection origin.
            bbox: Optional study area; the origin and the result must both lie inside.

        Returns:
            The projected Position.

        Raises:
            InvalidInputError: Non-finite or out-of-range coordinates, or a point outside bbox.
        """
        for value in (lon, lat, origin.lon, origin.lat):
            if not math.isfinite(value):
                raise InvalidInputError("Non-finite coordinate {}".format(value))
        if abs(lat) >= 89.0 or abs(origin.lat) >= 89.0:
            raise InvalidInputError("Latitude must satisfy |lat| < 89 degrees, got {}".format(lat))
        if abs(lon) > 180.0 or abs(origin.lon) > 180.0:
            raise InvalidInputError("Longitude out of range: {}".format(lon))
        if bbox is not None and not bbox.contains(Position(0.0, 0.0)):
            raise InvalidInputError("Projection origin lies outside the study area")

        radius = GwrCalibrationVariables.earth_radius_m
        x = radius * (lon - origin.lon) * math.cos(math.radians(origin.lat)) * math.pi / 180.0
        y = radius * (lat - origin.lat) * math.pi / 180.0
        position = Position(x, y)
        if bbox is not None and not bbox.contains(position):
            raise InvalidInputError(
                "Point ({}, {}) projects to ({:.1f}, {:.1f}) m, outside the study area".format(
                    lon, lat, x, y
                )
            )
        return position

    @staticmethod
    def unproject(position: Position, origin: LonLat) -> LonLat:
        """
        Inverse of project for the same origin.

        Args:
            position: Projected position in meters.
            origin: Projection origin.

        Returns:
            The lon/lat pair in degrees.
        """
        radius = GwrCalibrationVariables.earth_radius_m
        lon = origin.lon + position.x / (radius * math.cos(math.radians(origin.lat))) * 180.0 / math.pi
        lat = origin.lat + position.y / radius * 180.0 / math.pi
        return LonLat(lon, lat)

    @staticmethod
    def distance(a: Position, b: Position) -> float:
        """Euclidean distance in meters."""
        return math.hypot(a.x - b.x, a.y - b.y)

    @staticmethod
    def distances(target: Position, positions: Sequence[Position]) -> np.ndarray:
        """Distances from target to every position, as a float array."""
        if len(positions) == 0:
            return np.zeros(0)
        coords = np.array([[p.x, p.y] for p in positions], dtype=float)
        return np.hypot(coords[:, 0] - target.x, coords[:, 1] - target.y)
