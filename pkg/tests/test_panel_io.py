import numpy as np
import pandas as pd
import pytest

from gwr_calibration.fileactions.panel_io import PanelIO, format_hours
from gwr_calibration.misc.exceptions import MissingColumnError
from gwr_calibration.processing.preprocess import REFERENCE
from gwr_calibration.synthetic.synthetic_network import SynthSpec


class TestFormatHours:
    def test_utc_text(self):
        hours = pd.DatetimeIndex(["2020-06-15 08:00"], tz="UTC")
        assert format_hours(hours).tolist() == ["2020-06-15T08:00:00Z"]


class TestPanelIO:
    def test_round_trip(self, generator, tmp_path):
        panel = generator.generate(SynthSpec(sites=3, deployed=1, hours=30), seed=8).panel
        panel.dropped["SEN_02"] = 4
        panel_path, sites_path = PanelIO().write_panel(panel, str(tmp_path))
        read = PanelIO().read_panel(panel_path, sites_path)

        assert list(read.sites) == list(panel.sites)
        assert read.sites["SEN_01"] == panel.sites["SEN_01"]
        assert read.covariates == panel.covariates
        assert read.dropped == {"SEN_02": 4}
        assert list(read.frame.index) == list(panel.frame.index)
        np.testing.assert_array_equal(read.frame.to_numpy(), panel.frame.to_numpy())

    def test_layout(self, tiny_panel, tmp_path):
        panel_path, sites_path = PanelIO().write_panel(tiny_panel, str(tmp_path))
        with open(panel_path, encoding="utf-8") as f:
            header, first = f.readline().strip(), f.readline().strip()
        assert header == "site,hour,NO2_nA,REF_NO2"
        assert first.startswith("DEP_A,2021-03-01T00:00:00Z,")
        assert first.endswith(",")
        sites = pd.read_csv(sites_path)
        assert sites.columns.tolist() == ["id", "x", "y", "role", "typology", "paired_reference", "dropped_cells"]

    def test_missing_reference_column(self, tiny_panel, tmp_path):
        _, sites_path = PanelIO().write_panel(tiny_panel, str(tmp_path))
        broken = tmp_path / "broken.csv"
        broken.write_text("site,hour,NO2_nA\nSEN_A,2021-03-01T00:00:00Z,1\n", encoding="utf-8")
        with pytest.raises(MissingColumnError) as error:
            PanelIO().read_panel(str(broken), sites_path)
        assert error.value.column == REFERENCE
