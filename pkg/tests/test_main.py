import os

import pandas as pd
import pytest

from main import build_parser, main
from gwr_calibration.fileactions.model_io import ModelIO
from gwr_calibration.fileactions.panel_io import PanelIO

SYNTH_CONFIG = """
    [pipeline]
    output_dir=out
    log_level=WARNING

    [kernel]
    bandwidth=2500
    candidates_min=1000
    candidates_max=3000
    candidates_step=1000

    [grid]
    min_x=-4000
    min_y=-4000
    max_x=4000
    max_y=4000
    cell_size=4000

    [synth]
    sites=5
    deployed=1
    hours=384
    noise=2
    seed=3
"""


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


@pytest.fixture
def synth_config(write_config):
    return write_config(SYNTH_CONFIG)


@pytest.fixture
def synthetic_out(synth_config, tmp_path):
    assert main(["synth", "--config", synth_config]) == 0
    return tmp_path / "out"


class TestParser:
    def test_subcommands(self):
        args = build_parser().parse_args(["validate", "--config", "a.ini", "--bandwidth-search", "--jobs", "2"])
        assert args.command == "validate"
        assert args.bandwidth_search
        assert args.jobs == 2

    @pytest.mark.parametrize("argv", [[], ["explode", "--config", "a.ini"], ["fit"],
                                      ["fit", "--config", "a.ini", "--kernel", "bisquare"]])
    def test_usage_errors_exit_1(self, argv):
        assert main(argv) == 1


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert main(["fit", "--config", str(tmp_path / "absent.ini")]) == 1

    def test_invalid_config(self, write_config):
        assert main(["synth", "--config", write_config("[kernel]\nbandwidth=-1\n")]) == 1

    def test_zero_jobs(self, synth_config):
        assert main(["synth", "--config", synth_config, "--jobs", "0"]) == 1

    def test_missing_panel(self, synth_config):
        assert main(["fit", "--config", synth_config]) == 2

    def test_covariate_absent_from_panel(self, synth_config, synthetic_out):
        panel = PanelIO().read_panel(str(synthetic_out / "panel.csv"), str(synthetic_out / "sites.csv"))
        panel.frame = panel.frame.drop(columns=["CO_nA"])
        PanelIO().write_panel(panel, str(synthetic_out))
        assert main(["fit", "--config", synth_config]) == 1

    def test_numerical_failure(self, synthetic_out, write_config):
        config = write_config(SYNTH_CONFIG + "\n    [model]\n    condition_limit=1\n", "singular.ini")
        assert main(["validate", "--config", config, "--bandwidth-search"]) == 3


class TestPipeline:
    def test_synth(self, synthetic_out):
        assert sorted(os.listdir(synthetic_out)) == ["gwr-calibration.log", "panel.csv", "sites.csv", "truth.csv"]
        truth = pd.read_csv(synthetic_out / "truth.csv")
        assert truth["site"].tolist() == ["SEN_01", "SEN_02", "SEN_03", "SEN_04", "SEN_05", "DEP_01"]

    def test_fit(self, synth_config, synthetic_out):
        assert main(["fit", "--config", synth_config, "--model", "all"]) == 0
        for family in ("c", "nc", "gwr", "sgwr"):
            models = ModelIO().read_models(str(synthetic_out / "models_{}.csv".format(family)))
            assert models
        gwr = ModelIO().read_models(str(synthetic_out / "models_gwr.csv"))
        assert [m.target_id for m in gwr] == ["DEP_01", "SEN_01", "SEN_02", "SEN_03", "SEN_04", "SEN_05"]
        assert gwr[0].kernel.bandwidth == 2500.0
        standardized = ModelIO().read_models(str(synthetic_out / "models_c_standardized.csv"))
        assert all(m.standardized for m in standardized)
        assert [m.target_id for m in standardized] == [m.target_id for m in ModelIO().read_models(
            str(synthetic_out / "models_c.csv"))]
        assert pd.read_csv(synthetic_out / "fit_failures.csv").empty

    def test_fit_one_family_with_flags(self, synth_config, synthetic_out):
        assert main(["fit", "--config", synth_config, "--model", "gwr", "--kernel", "gtwr",
                     "--bandwidth", "1800"]) == 0
        models = ModelIO().read_models(str(synthetic_out / "models_gwr.csv"))
        assert len(models) == 6 * 24
        assert {m.kernel.kind for m in models} == {"gtwr"}
        assert not (synthetic_out / "models_c.csv").exists()

    def test_validate_is_reproducible(self, synth_config, synthetic_out):
        assert main(["validate", "--config", synth_config]) == 0
        first = read_bytes(synthetic_out / "scores.csv")
        report = read_bytes(synthetic_out / "report.txt")
        assert main(["validate", "--config", synth_config, "--jobs", "2"]) == 0
        assert read_bytes(synthetic_out / "scores.csv") == first
        assert read_bytes(synthetic_out / "report.txt") == report
        scores = pd.read_csv(synthetic_out / "scores.csv")
        assert set(scores["family"]) == {"c", "nc", "gwr", "sgwr"}

    def test_validate_with_bandwidth_search(self, synth_config, synthetic_out):
        assert main(["validate", "--config", synth_config, "--model", "sgwr", "--bandwidth-search"]) == 0
        curve = pd.read_csv(synthetic_out / "bandwidth_curve.csv")
        assert curve["bandwidth"].tolist() == [1000.0, 2000.0, 3000.0]

    def test_grid(self, synth_config, synthetic_out):
        assert main(["grid", "--config", synth_config]) == 0
        layer = pd.read_csv(synthetic_out / "sgwr_NO2_nA.csv")
        assert len(layer) == 4
        assert main(["grid", "--config", synth_config, "--model", "gwr", "--format", "geojson-points"]) == 0
        assert (synthetic_out / "gwr_coefficients.geojson").is_file()

    def test_grid_needs_a_bbox(self, write_config, synthetic_out):
        config = write_config("[pipeline]\noutput_dir=out\n", "nogrid.ini")
        assert main(["grid", "--config", config]) == 1

    def test_out_flag(self, synth_config, tmp_path):
        assert main(["synth", "--config", synth_config, "--out", str(tmp_path / "elsewhere")]) == 0
        assert (tmp_path / "elsewhere" / "panel.csv").is_file()


class TestIngest:
    def raw_file(self, tmp_path):
        lines = ["device,timestamp,NO2_nA,REF_NO2"]
        for minute in range(120):
            stamp = (pd.Timestamp("2020-06-15T08:00:00Z") + pd.Timedelta(minutes=minute)).strftime("%Y-%m-%dT%H:%M:%SZ")
            lines.append("R801,{},,30".format(stamp))
            lines.append("ASE_A01,{},12.5,".format(stamp))
            if minute < 60:
                lines.append("ASE_A02,{},14,".format(stamp))
        path = tmp_path / "raw.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return str(path)

    def test_ingest(self, write_config, sites_csv, tmp_path):
        config = write_config("""
            [pipeline]
            output_dir=out

            [ingest]
            sites=sites.csv
            reference_stations=R801

            [model]
            covariates=NO2_nA
        """)
        assert main(["ingest", "--config", config, self.raw_file(tmp_path)]) == 0
        panel = PanelIO().read_panel(str(tmp_path / "out" / "panel.csv"), str(tmp_path / "out" / "sites.csv"))
        assert panel.covariates == ("NO2_nA",)
        assert panel.rows(["ASE_A01"])["REF_NO2"].tolist() == [30.0, 30.0]
        assert len(panel.rows(["ASE_A02"])) == 1
        assert len(panel.rows(["R801"])) == 2

    def test_unmapped_device_is_a_data_error(self, write_config, sites_csv, tmp_path):
        config = write_config("""
            [ingest]
            sites=sites.csv

            [rename]
            ASE_A01=ASE_A01
        """)
        assert main(["ingest", "--config", config, self.raw_file(tmp_path)]) == 2

    def test_needs_a_site_registry(self, write_config, tmp_path):
        assert main(["ingest", "--config", write_config("[pipeline]\noutput_dir=out\n"),
                     self.raw_file(tmp_path)]) == 1
