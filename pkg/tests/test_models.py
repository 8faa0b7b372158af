import math

import numpy as np
import pytest

from unifilter import AtSensorSingularity, finite_diff_jacobian, linearize_analytical
from unifilter.models import (
    CoordinatedTurn,
    NearlyConstantVelocity,
    Position,
    RangeBearing,
    RangeOnly,
    coordinated_turn,
    ncv_matrices,
    range_bearing_model,
    sensor_model,
    wrap_angle,
)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def random_states(rng, n, count=100):
    x = np.column_stack([rng.uniform(-50, 50, (count, 2)), rng.normal(0, 2, (count, 2))])
    if n == 5:
        omega = rng.uniform(-0.5, 0.5, count)
        omega[:10] = rng.uniform(-1e-4, 1e-4, 10)
        x = np.column_stack([x, omega])
    return x


class TestWrapAngle:
    def test_interval(self):
        np.testing.assert_allclose(wrap_angle([0.0, np.pi, -np.pi, 3 * np.pi, 2 * np.pi + 0.1]), [0, np.pi, np.pi, np.pi, 0.1], atol=1e-12)
        x = np.linspace(-20, 20, 1001)
        w = wrap_angle(x)
        assert np.all(w > -np.pi) and np.all(w <= np.pi)
        np.testing.assert_allclose(np.cos(w), np.cos(x), atol=1e-12)


class TestRangeBearing:
    def test_on_axis(self):
        m = range_bearing_model((0.0, 0.0), state_dim=4)
        np.testing.assert_allclose(m(np.array([10.0, 0.0, 1.0, 1.0])), [10.0, 0.0])
        np.testing.assert_allclose(m(np.array([0.0, 5.0, 0.0, 0.0])), [5.0, np.pi / 2])
        jac = m.jacobian(np.array([10.0, 0.0, 0.0, 0.0]))
        np.testing.assert_allclose(jac, [[1.0, 0.0, 0.0, 0.0], [0.0, 0.1, 0.0, 0.0]])

    def test_offset_sensor(self):
        s = RangeBearing((1.0, 1.0))
        np.testing.assert_allclose(s.measure([4.0, 5.0]), [5.0, math.atan2(4, 3)])

    def test_batch_matches_single(self, rng):
        s = RangeBearing((2.0, -1.0))
        xs = random_states(rng, 4, 20)
        np.testing.assert_allclose(s.measure(xs), [s.measure(x) for x in xs], rtol=1e-15)

    def test_jacobian_vs_finite_differences(self, rng):
        m = range_bearing_model((3.0, -2.0), 1.0, 0.1, state_dim=4)
        for x in random_states(rng, 4):
            assert rel_err(m.jacobian(x), finite_diff_jacobian(m, x)) < 1e-5

    def test_singularity(self):
        m = range_bearing_model((1.0, 2.0))
        with pytest.raises(AtSensorSingularity):
            m(np.array([1.0, 2.0, 0.0, 0.0]))
        with pytest.raises(AtSensorSingularity):
            m.jacobian(np.array([1.0, 2.0 + 1e-12, 0.0, 0.0]))
        with pytest.raises(AtSensorSingularity):
            m.evaluate_many(np.array([[5.0, 5.0, 0, 0], [1.0, 2.0, 0, 0]]))

    def test_residual_wraps_bearing(self):
        m = range_bearing_model((0.0, 0.0))
        r = m.residual(np.array([1.0, np.pi - 0.1]), np.array([0.5, -np.pi + 0.1]))
        np.testing.assert_allclose(r, [0.5, -0.2], atol=1e-12)


class TestOtherSensors:
    def test_range_only(self, rng):
        s = RangeOnly((1.0, 0.0), 0.5)
        np.testing.assert_allclose(s.measure([4.0, 4.0, 0, 0]), [5.0])
        np.testing.assert_array_equal(s.noise_cov(), [[0.25]])
        m = sensor_model([s], 4)
        for x in random_states(rng, 4):
            assert rel_err(m.jacobian(x), finite_diff_jacobian(m, x)) < 1e-5

    def test_position(self, rng):
        m = sensor_model([Position(0.5)], 4)
        x = rng.standard_normal(4)
        np.testing.assert_array_equal(m(x), x[:2])
        np.testing.assert_array_equal(m.jacobian(x), np.eye(2, 4))
        np.testing.assert_array_equal(m.noise_cov, 0.25 * np.eye(2))

    def test_stacked(self, rng):
        sensors = [RangeBearing((0.0, 0.0)), RangeOnly((30.0, 0.0)), RangeBearing((0.0, 30.0), 2.0, 0.05)]
        m = sensor_model(sensors, 5)
        assert m.output_dim == 5
        np.testing.assert_allclose(np.diag(m.noise_cov), [1.0, 0.01, 1.0, 4.0, 0.0025])
        for x in random_states(rng, 5):
            assert rel_err(m.jacobian(x), finite_diff_jacobian(m, x)) < 1e-5
        # only the two bearing components are wrapped
        r = m.residual(np.full(5, 3.0), np.full(5, -3.0))
        np.testing.assert_allclose(r, [6.0, 6.0 - 2 * np.pi, 6.0, 6.0, 6.0 - 2 * np.pi])


class TestDynamics:
    def test_ncv_matrices(self):
        F, Q = ncv_matrices(2.0, 0.5)
        np.testing.assert_array_equal(F[:2, 2:], 2 * np.eye(2))
        np.testing.assert_allclose(Q[:2, :2], 0.5 * 8 / 3 * np.eye(2))
        np.testing.assert_allclose(Q[:2, 2:], 0.5 * 2 * np.eye(2))
        np.testing.assert_allclose(Q[2:, 2:], 0.5 * 2 * np.eye(2))

    def test_ncv_model(self, rng):
        dyn = NearlyConstantVelocity(0.2)
        m = dyn.model(1.0)
        x = rng.standard_normal(4)
        np.testing.assert_allclose(m(x), dyn.transition(x, 1.0))
        np.testing.assert_allclose(m(x), [x[0] + x[2], x[1] + x[3], x[2], x[3]])
        assert linearize_analytical(m, x) is m.affine

    def test_coordinated_turn_limits(self):
        x = np.array([1.0, 2.0, 3.0, -1.0, 0.0])
        np.testing.assert_allclose(coordinated_turn(x, 2.0), [7.0, 0.0, 3.0, -1.0, 0.0])
        # quarter turn at unit speed and rate pi/2
        x = np.array([0.0, 0.0, 1.0, 0.0, np.pi / 2])
        np.testing.assert_allclose(coordinated_turn(x, 1.0), [2 / np.pi, 2 / np.pi, 0.0, 1.0, np.pi / 2], atol=1e-15)

    def test_coordinated_turn_series_continuity(self):
        for omega in (1e-4 * (1 - 1e-9), 1e-4 * (1 + 1e-9)):
            x = np.array([0.0, 0.0, 10.0, 5.0, omega])
            exact = np.array([
                (10 * np.sin(omega * 3) - 5 * (1 - np.cos(omega * 3))) / omega,
                (10 * (1 - np.cos(omega * 3)) + 5 * np.sin(omega * 3)) / omega,
            ])
            np.testing.assert_allclose(coordinated_turn(x, 3.0)[:2], exact, rtol=1e-10)

    def test_coordinated_turn_jacobian(self, rng):
        m = CoordinatedTurn().model(1.5)
        for x in random_states(rng, 5):
            assert rel_err(m.jacobian(x), finite_diff_jacobian(m, x)) < 1e-5

    def test_coordinated_turn_batch(self, rng):
        xs = random_states(rng, 5, 10)
        np.testing.assert_allclose(coordinated_turn(xs, 1.0), [coordinated_turn(x, 1.0) for x in xs], rtol=1e-14)

    def test_process_cov(self):
        Q = CoordinatedTurn(0.1, 1e-3).process_cov(2.0)
        assert Q.shape == (5, 5)
        assert Q[4, 4] == pytest.approx(2e-3)
        np.testing.assert_allclose(Q[:4, :4], ncv_matrices(2.0, 0.1)[1])
