import os

import geojson
import numpy as np
import pytest

from gwr_calibration.fileactions.layer_export import LayerExport, significant
from gwr_calibration.maps.coefficient_grid import CoefficientSurface
from gwr_calibration.misc.exceptions import ConfigError
from gwr_calibration.models.geo import Geo, LonLat, Position
from gwr_calibration.models.kernel import KernelSpec


@pytest.fixture
def surface():
    """2 x 2 nodes, one of them without a fit."""
    intercept = np.array([[1.5, 2.25], [np.nan, 4.0]])
    slope = np.array([[0.123456789, 0.5], [np.nan, 0.75]])
    return CoefficientSurface(np.array([250.0, 750.0]), np.array([250.0, 750.0]), "sgwr", KernelSpec(),
                              {"intercept": intercept, "NO2_nA": slope})


class TestSignificant:
    @pytest.mark.parametrize("value,text", [(0.123456789, "0.123457"), (1460.0, "1460"), (np.nan, ""),
                                            (-2.5e-9, "-2.5e-09")])
    def test_format(self, value, text):
        assert significant(value) == text


class TestDelimitedGrid:
    def test_one_file_per_coefficient(self, surface, tmp_path):
        paths = LayerExport().export_layers(surface, str(tmp_path), "delimited-grid")
        assert [os.path.basename(p) for p in paths] == ["sgwr_intercept.csv", "sgwr_NO2_nA.csv"]
        with open(paths[1], encoding="utf-8") as f:
            lines = f.read().splitlines()
        assert lines == ["x,y,value", "250.000,250.000,0.123457", "750.000,250.000,0.5",
                         "250.000,750.000,", "750.000,750.000,0.75"]

    def test_read_back(self, surface, tmp_path):
        path = LayerExport().export_layers(surface, str(tmp_path))[0]
        frame = LayerExport.read_delimited_layer(path)
        assert frame.columns.tolist() == ["x", "y", "value"]
        np.testing.assert_array_equal(frame["value"], [1.5, 2.25, np.nan, 4.0])


class TestGeojsonPoints:
    def test_projected_coordinates(self, surface, tmp_path):
        (path,) = LayerExport().export_layers(surface, str(tmp_path), "geojson-points")
        assert os.path.basename(path) == "sgwr_coefficients.geojson"
        with open(path, encoding="utf-8") as f:
            collection = geojson.load(f)
        assert collection.is_valid
        features = collection["features"]
        assert [f["id"] for f in features] == [0, 1, 2, 3]
        assert features[1]["geometry"]["coordinates"] == [750.0, 250.0]
        assert features[0]["properties"] == {"x": 250.0, "y": 250.0, "intercept": 1.5, "NO2_nA": 0.123457}
        assert features[2]["properties"]["intercept"] is None

    def test_lonlat_coordinates(self, surface, tmp_path):
        origin = LonLat(4.40, 51.21)
        (path,) = LayerExport().export_layers(surface, str(tmp_path), "geojson-points", origin)
        with open(path, encoding="utf-8") as f:
            features = geojson.load(f)["features"]
        lon, lat = features[3]["geometry"]["coordinates"]
        expected = Geo.unproject(Position(750.0, 750.0), origin)
        assert lon == pytest.approx(expected.lon, abs=1e-7)
        assert lat == pytest.approx(expected.lat, abs=1e-7)
        assert features[3]["properties"]["x"] == 750.0

    def test_rewrite_is_identical(self, surface, tmp_path):
        (path,) = LayerExport().export_layers(surface, str(tmp_path), "geojson-points")
        with open(path, "rb") as f:
            first = f.read()
        LayerExport().export_layers(surface, str(tmp_path), "geojson-points")
        with open(path, "rb") as f:
            assert f.read() == first


class TestErrors:
    def test_unknown_format(self, surface, tmp_path):
        with pytest.raises(ConfigError):
            LayerExport().export_layers(surface, str(tmp_path), "shapefile")

    def test_missing_folder(self, surface, tmp_path):
        with pytest.raises(ConfigError):
            LayerExport().export_layers(surface, str(tmp_path / "absent"))
