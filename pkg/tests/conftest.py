import os
import textwrap

import numpy as np
import pandas as pd
import pytest

from gwr_calibration.models.geo import Position
from gwr_calibration.processing.preprocess import REFERENCE, Panel, SiteRecord, SiteRole, Typology
from gwr_calibration.synthetic.synthetic_network import SynthSpec, SyntheticNetworkGenerator

ANTWERP_DIR = os.environ.get("GWR_CALIBRATION_ANTWERP_DIR", "")

requires_antwerp = pytest.mark.skipif(
    not ANTWERP_DIR or not os.path.isdir(ANTWERP_DIR),
    reason="GWR_CALIBRATION_ANTWERP_DIR does not point at the Antwerp data files",
)


@pytest.fixture
def generator():
    return SyntheticNetworkGenerator()


@pytest.fixture
def noiseless_network(generator):
    """Constant coefficients, no noise, identical signals at 6 collocated sites and 2 deployed sensors."""
    spec = SynthSpec(sites=6, deployed=2, hours=24 * 30, noise=0.0, site_spread=0.0)
    return generator.generate(spec, seed=3)


@pytest.fixture
def distorted_network(generator):
    """Noiseless, sensors with their own gains and offsets, identical latent signals at every site."""
    spec = SynthSpec(sites=6, hours=24 * 30, noise=0.0, gain_spread=0.4, offset_spread=0.5, site_spread=0.0)
    return generator.generate(spec, seed=11)


@pytest.fixture
def noisy_network(generator):
    spec = SynthSpec(sites=9, deployed=2, hours=24 * 48, noise=5.0, field="linear", amplitude=0.3)
    return generator.generate(spec, seed=7)


@pytest.fixture
def tiny_panel():
    """Two collocated sensors, their stations and a deployed sensor over two days."""
    hours = pd.date_range("2021-03-01", periods=48, freq="h", tz="UTC")
    rng = np.random.default_rng(0)
    sites = [
        SiteRecord("REF_A", Position(0.0, 0.0), SiteRole.REFERENCE, Typology.URBAN_TRAFFIC),
        SiteRecord("REF_B", Position(1000.0, 0.0), SiteRole.REFERENCE, Typology.URBAN_BACKGROUND),
        SiteRecord("SEN_A", Position(0.0, 0.0), SiteRole.COLLOCATED_SENSOR, Typology.URBAN_TRAFFIC, "REF_A"),
        SiteRecord("SEN_B", Position(1000.0, 0.0), SiteRole.COLLOCATED_SENSOR, Typology.URBAN_BACKGROUND, "REF_B"),
        SiteRecord("DEP_A", Position(500.0, 500.0), SiteRole.DEPLOYED_SENSOR, Typology.URBAN_TRAFFIC),
    ]
    frames = []
    for site_id, station in (("SEN_A", "REF_A"), ("SEN_B", "REF_B"), ("DEP_A", None)):
        no2 = 40 + 10 * rng.standard_normal(len(hours))
        reference = 5 + 0.8 * no2 if station else np.full(len(hours), np.nan)
        index = pd.MultiIndex.from_arrays([[site_id] * len(hours), hours], names=["site", "hour"])
        frames.append(pd.DataFrame({"NO2_nA": no2, REFERENCE: reference}, index=index))
        if station:
            station_index = pd.MultiIndex.from_arrays([[station] * len(hours), hours], names=["site", "hour"])
            frames.append(pd.DataFrame({REFERENCE: reference}, index=station_index))
    return Panel(sites, pd.concat(frames), ["NO2_nA"])


@pytest.fixture
def write_config(tmp_path):
    """Writes an INI file into tmp_path and returns its path."""

    def write(text: str, name: str = "study.ini") -> str:
        path = tmp_path / name
        path.write_text(textwrap.dedent(text).lstrip(), encoding="utf-8")
        return str(path)

    return write


@pytest.fixture
def sites_csv(tmp_path):
    """A planar site registry with one station, its collocated sensor and a deployed sensor."""
    path = tmp_path / "sites.csv"
    path.write_text(
        "id,x,y,role,typology,paired_reference\n"
        "R801,0,0,reference,urban_traffic,\n"
        "ASE_A01,0,0,collocated_sensor,urban_traffic,R801\n"
        "ASE_A02,800,300,deployed_sensor,urban_background,\n",
        encoding="utf-8",
    )
    return str(path)
