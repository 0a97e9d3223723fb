import numpy as np
import pandas as pd
import pytest

from gwr_calibration.misc.exceptions import ConfigError, NumericalError
from gwr_calibration.models.geo import Position
from gwr_calibration.processing.preprocess import REFERENCE, SiteRole
from gwr_calibration.synthetic.synthetic_network import DEFAULT_BETA, RandomField, SynthSpec, SyntheticNetworkGenerator


class TestSynthSpec:
    @pytest.mark.parametrize("kwargs", [
        {"sites": 0},
        {"hours": 0},
        {"noise": -1.0},
        {"field": "quadratic"},
        {"gain_spread": 1.0},
        {"site_spread": -0.1},
        {"covariates": ("NO2_nA", "NO_nA"), "beta": (1.0, 2.0, 3.0)},
        {"covariates": ("NO2_nA",), "beta": (1.0,)},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SynthSpec(**kwargs)


class TestGenerate:
    def test_same_seed_same_network(self, generator):
        spec = SynthSpec(sites=4, deployed=1, hours=48)
        first, second = generator.generate(spec, seed=5), generator.generate(spec, seed=5)
        pd.testing.assert_frame_equal(first.panel.frame, second.panel.frame)
        pd.testing.assert_frame_equal(first.truth, second.truth)

    def test_other_seed_other_network(self, generator):
        spec = SynthSpec(sites=4, hours=48)
        assert not generator.generate(spec, seed=1).panel.frame.equals(generator.generate(spec, seed=2).panel.frame)

    def test_layout(self, generator):
        network = generator.generate(SynthSpec(sites=3, deployed=2, hours=30), seed=0)
        panel = network.panel
        assert panel.site_ids(SiteRole.REFERENCE) == ["REF_01", "REF_02", "REF_03"]
        assert panel.site_ids(SiteRole.DEPLOYED_SENSOR) == ["DEP_01", "DEP_02"]
        assert panel.sites["SEN_02"].paired_reference == "REF_02"
        assert panel.position("SEN_02") == panel.position("REF_02")
        assert len(panel.frame) == 30 * (3 + 3 + 2)
        assert panel.rows(["DEP_01"])[REFERENCE].isna().all()
        assert panel.hours[0] == pd.Timestamp("2020-06-15", tz="UTC")
        assert list(network.truth.index) == ["SEN_01", "SEN_02", "SEN_03", "DEP_01", "DEP_02"]

    def test_sites_inside_the_box(self, generator):
        spec = SynthSpec(sites=20, hours=2)
        panel = generator.generate(spec, seed=4).panel
        assert all(spec.box.contains(site.position) for site in panel.sites.values())

    def test_noiseless_response_follows_the_truth(self, generator):
        spec = SynthSpec(sites=3, hours=100, noise=0.0, field="bump", site_spread=0.5)
        network = generator.generate(spec, seed=2)
        rows = network.panel.rows(["SEN_02"])
        observed = rows[list(spec.covariates)].to_numpy()
        np.testing.assert_allclose(rows[REFERENCE], network.true_beta("SEN_02")[0]
                                   + observed @ network.true_beta("SEN_02")[1:], rtol=1e-12)
        np.testing.assert_array_equal(network.panel.reference_series("REF_02").to_numpy(), rows[REFERENCE].to_numpy())

    def test_gain_and_offset(self, generator):
        network = generator.generate(SynthSpec(sites=2, hours=50, gain_spread=0.3, offset_spread=1.0), seed=9)
        truth = network.truth.loc["SEN_01"]
        observed = network.panel.rows(["SEN_01"])["NO2_nA"].to_numpy()
        expected = truth["gain_NO2_nA"] * network.latent["NO2_nA"][0] + truth["offset_NO2_nA"]
        np.testing.assert_allclose(observed, expected)
        assert 0.7 <= truth["gain_NO2_nA"] <= 1.3
        np.testing.assert_array_equal(network.panel.rows(["SEN_01"])["RH_pct"].to_numpy(), network.latent["RH_pct"][0])

    def test_noise_level(self, generator):
        network = generator.generate(SynthSpec(sites=4, hours=5000, noise=3.0), seed=1)
        residual = network.response["noisy"] - network.response["clean"]
        assert residual.std() == pytest.approx(3.0, rel=0.05)


class TestFields:
    def test_constant(self):
        np.testing.assert_array_equal(SyntheticNetworkGenerator.beta_at(SynthSpec(), Position(3000.0, 100.0)),
                                      DEFAULT_BETA)

    def test_linear(self):
        spec = SynthSpec(field="linear", amplitude=0.5)
        east = SyntheticNetworkGenerator.beta_at(spec, Position(5000.0, 0.0))
        np.testing.assert_allclose(east, np.asarray(DEFAULT_BETA) * 1.5)
        assert SyntheticNetworkGenerator.field_shape(spec, Position(-5000.0, 0.0)) == -1.0

    def test_bump(self):
        spec = SynthSpec(field="bump", length_scale=1000.0)
        assert SyntheticNetworkGenerator.field_shape(spec, Position(0.0, 0.0)) == 1.0
        assert SyntheticNetworkGenerator.field_shape(spec, Position(1000.0, 0.0)) == pytest.approx(np.exp(-0.5))

    def test_random_field_needs_its_features(self):
        with pytest.raises(ConfigError):
            SyntheticNetworkGenerator.field_shape(SynthSpec(field="random"), Position(0.0, 0.0))

    def test_random_field_has_unit_variance_and_its_correlation_length(self):
        length = 1000.0
        random_field = RandomField.draw(np.random.default_rng(0), length)
        points = np.random.default_rng(1).uniform(-100 * length, 100 * length, (4000, 2))

        def values(shift):
            return np.array([random_field.value(Position(x + shift, y)) for x, y in points])

        base = values(0.0)
        assert abs(base.mean()) < 0.15
        assert base.var() == pytest.approx(1.0, abs=0.2)
        assert np.corrcoef(base, values(0.25 * length))[0, 1] > 0.9
        assert np.corrcoef(base, values(length))[0, 1] == pytest.approx(np.exp(-0.5), abs=0.1)
        assert abs(np.corrcoef(base, values(3 * length))[0, 1]) < 0.15

    def test_random_network_truth_follows_its_field(self, generator):
        spec = SynthSpec(sites=6, hours=48, field="random", length_scale=800.0, amplitude=0.1)
        network = generator.generate(spec, seed=5)
        assert network.random_field is not None
        for site_id, row in network.truth.iterrows():
            expected = SyntheticNetworkGenerator.beta_at(spec, Position(row["x"], row["y"]), network.random_field)
            np.testing.assert_allclose(network.true_beta(site_id), expected)
        assert network.truth["intercept"].std() > 0
        again = generator.generate(spec, seed=5)
        pd.testing.assert_frame_equal(network.truth, again.truth)

    def test_other_fields_draw_no_random_features(self, generator):
        assert generator.generate(SynthSpec(sites=2, hours=24, field="bump"), seed=0).random_field is None


class TestOracle:
    def test_matches_lstsq(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            design = np.column_stack([np.ones(40), rng.standard_normal((40, 4))])
            response = rng.standard_normal(40)
            expected = np.linalg.lstsq(design, response, rcond=None)[0]
            np.testing.assert_allclose(SyntheticNetworkGenerator.oracle_ols(design, response), expected,
                                       rtol=1e-9, atol=1e-10)

    def test_rank_deficient(self):
        design = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0)])
        with pytest.raises(NumericalError):
            SyntheticNetworkGenerator.oracle_ols(design, np.arange(10.0))

    def test_too_few_rows(self):
        with pytest.raises(NumericalError):
            SyntheticNetworkGenerator.oracle_ols(np.ones((2, 3)), np.ones(2))
