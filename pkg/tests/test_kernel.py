import math

import numpy as np
import pytest

from gwr_calibration.misc.exceptions import ConfigError, InvalidInputError
from gwr_calibration.models.geo import Position
from gwr_calibration.models.kernel import Kernel, KernelSpec


class TestKernelSpec:
    def test_defaults(self):
        spec = KernelSpec()
        assert spec.kind == "gaussian"
        assert spec.bandwidth == 1460.0
        assert not spec.circular_hours

    def test_decay(self):
        assert KernelSpec(bandwidth=1000.0).decay == pytest.approx(5e-7)

    @pytest.mark.parametrize("kwargs", [{"kind": "bisquare"}, {"bandwidth": 0.0}, {"bandwidth": -5.0},
                                        {"time_exponent": 2}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            KernelSpec(**kwargs)

    def test_with_bandwidth_keeps_the_rest(self):
        spec = KernelSpec("gtwr", 1460.0, circular_hours=True).with_bandwidth(3000.0)
        assert spec == KernelSpec("gtwr", 3000.0, circular_hours=True)


class TestGaussianWeight:
    def test_weight_at_bandwidth(self):
        assert Kernel.gaussian_weight(Position(0, 0), Position(1460.0, 0), 1460.0) == pytest.approx(math.exp(-0.5), rel=1e-15)

    def test_weight_at_zero_distance(self):
        assert Kernel.gaussian_weight(Position(5, 5), Position(5, 5), 100.0) == 1.0

    def test_matches_decay_form(self):
        rng = np.random.default_rng(2)
        spec = KernelSpec(bandwidth=1460.0)
        for d in rng.uniform(0, 5000, 100):
            expected = math.exp(-spec.decay * d ** 2)
            assert Kernel.gaussian_weight(Position(0, 0), Position(d, 0), 1460.0) == pytest.approx(
                expected, rel=1e-12)

    def test_far_weight_is_floored(self):
        w = Kernel.gaussian_weight(Position(0, 0), Position(1e7, 0), 10.0)
        assert w > 0

    def test_monotone_in_distance(self):
        weights = [Kernel.gaussian_weight(Position(0, 0), Position(d, 0), 500.0) for d in (0, 100, 500, 2000)]
        assert weights == sorted(weights, reverse=True)

    def test_invalid_bandwidth(self):
        with pytest.raises(InvalidInputError):
            Kernel.gaussian_weight(Position(0, 0), Position(1, 0), 0.0)


class TestGtwrWeight:
    def test_same_hour_equals_gaussian(self):
        s, s_j = Position(0, 0), Position(300, 400)
        assert Kernel.gtwr_weight(s, s_j, 1000.0, 7, 7) == Kernel.gaussian_weight(s, s_j, 1000.0)

    def test_time_factor(self):
        s = Position(0, 0)
        assert Kernel.gtwr_weight(s, s, 1000.0, 10, 12) == pytest.approx(1.0 / 9.0)

    def test_linear_hours_across_midnight(self):
        s = Position(0, 0)
        assert Kernel.gtwr_weight(s, s, 1000.0, 23, 0) == pytest.approx(1.0 / (1.0 + 23 ** 3))
        assert Kernel.gtwr_weight(s, s, 1000.0, 23, 0, circular=True) == pytest.approx(0.5)

    @pytest.mark.parametrize("h", [-1, 24, 25.5])
    def test_hour_out_of_range(self, h):
        with pytest.raises(InvalidInputError):
            Kernel.gtwr_weight(Position(0, 0), Position(0, 0), 1000.0, h, 0)


class TestWeightVector:
    def test_rows_repeat_site_weights(self):
        kernel = Kernel(KernelSpec(bandwidth=1000.0))
        a, b = Position(0, 0), Position(1000, 0)
        weights = kernel.weight_vector(Position(0, 0), [a, a, b, b, b])
        np.testing.assert_allclose(weights, [1, 1, math.exp(-0.5), math.exp(-0.5), math.exp(-0.5)])

    def test_normalized_far_target_does_not_underflow(self):
        kernel = Kernel(KernelSpec(bandwidth=100.0))
        weights = kernel.weight_vector(Position(1e6, 0), [Position(0, 0), Position(100, 0)], normalize=True)
        assert weights.max() == 1.0
        assert np.all(weights > 0)

    def test_gtwr_needs_hours(self):
        kernel = Kernel(KernelSpec("gtwr"))
        with pytest.raises(InvalidInputError):
            kernel.weight_vector(Position(0, 0), [Position(0, 0)])

    def test_gtwr_rows(self):
        kernel = Kernel(KernelSpec("gtwr", 1000.0))
        weights = kernel.weight_vector(Position(0, 0), [Position(0, 0)] * 3, row_hours=[5, 6, 8], target_hour=5)
        np.testing.assert_allclose(weights, [1.0, 0.5, 1.0 / 28.0])

    def test_row_weights_with_codes(self):
        kernel = Kernel(KernelSpec(bandwidth=1000.0))
        weights = kernel.row_weights(Position(0, 0), [Position(0, 0), Position(2000, 0)], np.array([1, 0, 1]))
        np.testing.assert_allclose(weights, [math.exp(-2.0), 1.0, math.exp(-2.0)])

    def test_empty(self):
        kernel = Kernel(KernelSpec())
        assert kernel.row_weights(Position(0, 0), [], np.array([], dtype=int)).shape == (0,)
