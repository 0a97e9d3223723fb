import logging
import os
from typing import List, Optional

import geojson
import numpy as np
import pandas as pd

from gwr_calibration.maps.coefficient_grid import CoefficientSurface
from gwr_calibration.misc.exceptions import ConfigError
from gwr_calibration.models.geo import Geo, LonLat, Position

FORMATS = ("delimited-grid", "geojson-points")


def significant(value: float) -> str:
    """6 significant digits, empty for no-data."""
    return "" if not np.isfinite(value) else "{:.6g}".format(value)


class LayerExport:
    """
    Map layers of a coefficient surface: delimited grids (one file per coefficient, x,y,value,
    row-major) or one GeoJSON point collection with a property per coefficient.
    """

    def __init__(self, log_level: int = logging.INFO):
        self.logger = logging.getLogger("LayerExport")
        self.logger.setLevel(log_level)

    def export_layers(self, surface: CoefficientSurface, out_dir: str, fmt: str = "delimited-grid",
                      origin: Optional[LonLat] = None) -> List[str]:
        """
        Args:
            surface: The surface to export.
            out_dir: Existing output folder.
            fmt: delimited-grid or geojson-points.
            origin: Projection origin; GeoJSON coordinates are lon/lat when given, projected
                meters otherwise.

        Returns:
            The written paths.

        Raises:
            ConfigError: Unknown format or unwritable folder.
        """
        if fmt not in FORMATS:
            raise ConfigError("Unknown layer format '{}'".format(fmt))
        try:
            if fmt == "delimited-grid":
                paths = [self._write_delimited(surface, label, out_dir) for label in surface.labels]
            else:
                paths = [self._write_geojson(surface, out_dir, origin)]
        except OSError as e:
            raise ConfigError("Cannot write layers to {}: {}".format(out_dir, e))
        self.logger.info("Exported {} layers as {}".format(len(surface.labels), fmt))
        return paths

    @staticmethod
    def layer_file_name(surface: CoefficientSurface, label: str) -> str:
        return "{}_{}.csv".format(surface.model_kind, label)

    def _write_delimited(self, surface: CoefficientSurface, label: str, out_dir: str) -> str:
        path = os.path.join(out_dir, self.layer_file_name(surface, label))
        frame = surface.to_frame(label)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("x,y,value\n")
            for x, y, value in frame.itertuples(index=False):
                f.write("{:.3f},{:.3f},{}\n".format(x, y, significant(value)))
        return path

    def _write_geojson(self, surface: CoefficientSurface, out_dir: str, origin: Optional[LonLat]) -> str:
        path = os.path.join(out_dir, "{}_coefficients.geojson".format(surface.model_kind))
        features = []
        for i, (iy, ix) in enumerate(np.ndindex(len(surface.y), len(surface.x))):
            x, y = float(surface.x[ix]), float(surface.y[iy])
            if origin is not None:
                lonlat = Geo.unproject(Position(x, y), origin)
                coordinates = [round(lonlat.lon, 7), round(lonlat.lat, 7)]
            else:
                coordinates = [x, y]
            properties = {"x": x, "y": y}
            for label in surface.labels:
                value = surface.layers[label][iy, ix]
                properties[label] = float(significant(value)) if np.isfinite(value) else None
            features.append(geojson.Feature(geometry=geojson.Point(coordinates), id=i, properties=properties))
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            geojson.dump(geojson.FeatureCollection(features), f, sort_keys=True, indent=2)
        return path

    @staticmethod
    def read_delimited_layer(path: str) -> pd.DataFrame:
        """x, y, value with NaN at no-data nodes."""
        return pd.read_csv(path)
