import numpy as np
import pytest

from data.normalization import denormalize_case, encode_condition, freestream_magnitude, normalize_raw_case
from data.synthetic import FREESTREAM_PRESSURE, potential_flow
from utils.errors import ConditionError, NormalizationError


class TestNormalizeRawCase:
    def test_freestream_pressure_gives_zero_channel(self):
        p = np.full((4, 4), 101325.0)
        target = normalize_raw_case(p, np.ones((4, 4)), np.zeros((4, 4)), 3.0, 101325.0)
        np.testing.assert_array_equal(target[0], 0.0)

    def test_uniform_freestream_velocity(self):
        speed = 12.5
        target = normalize_raw_case(np.zeros((3, 5)), np.full((3, 5), speed), np.zeros((3, 5)), (speed, 0.0), 0.0)
        np.testing.assert_allclose(target[1], 1.0)
        np.testing.assert_allclose(target[2], 0.0)

    def test_scaling(self):
        target = normalize_raw_case(np.array([[9.0]]), np.array([[6.0]]), np.array([[-3.0]]), (0.0, 3.0), 0.0)
        np.testing.assert_allclose(target[:, 0, 0], [1.0, 2.0, -1.0])

    def test_mask_zeroes_solid_cells(self):
        mask = np.zeros((3, 3))
        mask[1, 1] = 1.0
        target = normalize_raw_case(np.ones((3, 3)), np.ones((3, 3)), np.ones((3, 3)), 1.0, 0.0, mask=mask)
        assert np.all(target[:, 1, 1] == 0.0)
        assert np.all(target[:, 0, 0] == 1.0)

    @pytest.mark.parametrize("freestream", [0.0, (0.0, 0.0), float("nan")])
    def test_zero_freestream_rejected(self, freestream):
        with pytest.raises(NormalizationError):
            normalize_raw_case(np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 2)), freestream, 0.0)

    def test_shape_disagreement(self):
        with pytest.raises(NormalizationError):
            normalize_raw_case(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2)), 1.0, 0.0)

    def test_freestream_magnitude(self):
        assert freestream_magnitude((3.0, 4.0)) == pytest.approx(5.0)
        assert freestream_magnitude(2.0) == pytest.approx(2.0)


class TestRoundTrip:
    def test_potential_flow_case(self):
        pressure, velocity_x, velocity_y, mask, speed = potential_flow((16, 16), 6.5e6, 20.0)
        alpha = np.deg2rad(20.0)
        freestream = (speed * np.cos(alpha), speed * np.sin(alpha))
        target = normalize_raw_case(pressure, velocity_x, velocity_y, freestream, FREESTREAM_PRESSURE, mask=mask)
        restored = denormalize_case(target, freestream, FREESTREAM_PRESSURE)
        fluid = mask < 0.5
        for raw, back in zip((pressure, velocity_x, velocity_y), restored):
            np.testing.assert_allclose(back[fluid], raw[fluid], rtol=1e-6, atol=1e-6)

    def test_random_fields(self, rng):
        fields = rng.normal(size=(3, 6, 7))
        target = normalize_raw_case(*fields, freestream_velocity=(1.7, -0.4), freestream_pressure=0.3)
        for raw, back in zip(fields, denormalize_case(target, (1.7, -0.4), 0.3)):
            np.testing.assert_allclose(back, raw, rtol=1e-6, atol=1e-12)

    def test_denormalize_shape_checked(self):
        with pytest.raises(NormalizationError):
            denormalize_case(np.zeros((2, 4, 4)), 1.0, 0.0)


class TestEncodeCondition:
    def test_zero_angle(self):
        condition = encode_condition(np.zeros((4, 4)), 3.0e6, 0.0, 6.0e6)
        np.testing.assert_allclose(condition[1], 0.5)
        np.testing.assert_allclose(condition[2], 0.0, atol=1e-15)

    def test_reference_values(self):
        condition = encode_condition(np.zeros((2, 2)), 6.5e6, 20.0, 10.5e6)
        assert condition[1, 0, 0] == pytest.approx(0.5817, abs=1e-4)
        assert condition[2, 0, 0] == pytest.approx(0.2117, abs=1e-4)

    def test_mask_is_binarized(self, rng):
        condition = encode_condition(rng.uniform(size=(8, 8)), 1.0e6, 20.0, 1.0e6)
        assert set(np.unique(condition[0])) <= {0.0, 1.0}
        assert condition.dtype == np.float64

    def test_parametric_channels_bounded(self):
        for alpha in (-180.0, -45.0, 0.0, 90.0, 135.0):
            condition = encode_condition(np.zeros((2, 2)), 10.5e6, alpha, 10.5e6)
            assert np.all(np.abs(condition[1:]) <= 1.0 + 1e-12)

    @pytest.mark.parametrize("reynolds,re_max", [(0.0, 1.0e6), (-1.0e6, 1.0e6), (2.0e6, 1.0e6)])
    def test_invalid_reynolds(self, reynolds, re_max):
        with pytest.raises(ConditionError):
            encode_condition(np.zeros((2, 2)), reynolds, 20.0, re_max)

    def test_mask_must_be_2d(self):
        with pytest.raises(ConditionError):
            encode_condition(np.zeros((1, 2, 2)), 1.0e6, 20.0, 1.0e6)
