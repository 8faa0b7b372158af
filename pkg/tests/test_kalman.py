import numpy as np
import pytest

import oracles
from conftest import random_spd
from unifilter import (
    AffineModel,
    DimensionMismatch,
    GaussianDensity,
    SingularInnovation,
    SingularPrediction,
    make_gaussian,
    measurement_update,
    rts_smooth,
    smoothing_step,
    time_update,
)
from unifilter.kalman import joseph_covariance


def g1(mean, var):
    return make_gaussian([mean], [[var]])


class TestTimeUpdate:
    def test_random_walk(self):
        assert time_update(g1(1, 1), AffineModel([[1]], [0], [[0]]), [[1]]) == g1(1, 2)

    def test_constant_velocity_multiply(self):
        out = time_update(make_gaussian([0, 0], np.eye(2)), AffineModel([[1, 1], [0, 1]], [0, 0]), np.zeros((2, 2)))
        np.testing.assert_array_equal(out.mean, [0, 0])
        np.testing.assert_array_equal(out.cov, [[2, 1], [1, 1]])

    def test_omega_adds_exactly(self, rng):
        P = random_spd(rng, 3)
        A, Q = rng.standard_normal((3, 3)), random_spd(rng, 3)
        d = GaussianDensity(rng.standard_normal(3), P)
        c = 0.37
        base = time_update(d, AffineModel(A, np.zeros(3)), Q)
        extra = time_update(d, AffineModel(A, np.zeros(3), c * np.eye(3)), Q)
        np.testing.assert_allclose(np.diag(extra.cov - base.cov), c, rtol=1e-14)
        # Omega as a model term equals adding it to Q
        Om = random_spd(rng, 3)
        np.testing.assert_allclose(
            time_update(d, AffineModel(A, np.zeros(3), Om), Q).cov,
            time_update(d, AffineModel(A, np.zeros(3)), Q + Om).cov,
            rtol=1e-14,
        )


class TestMeasurementUpdate:
    def test_textbook_scalar(self):
        post, gain, innov, S = measurement_update(g1(0, 1), AffineModel([[1]], [0], [[0]]), [[1]], [1])
        np.testing.assert_allclose([post.mean[0], post.cov[0, 0], gain.gain[0, 0]], [0.5, 0.5, 0.5], rtol=1e-15)
        np.testing.assert_array_equal(innov, [1.0])
        np.testing.assert_array_equal(S, [[2.0]])

    def test_with_omega(self):
        post, gain, _, S = measurement_update(g1(0, 1), AffineModel([[1]], [0], [[1]]), [[1]], [1])
        assert gain.gain[0, 0] == pytest.approx(1 / 3, rel=1e-15)
        assert post.mean[0] == pytest.approx(1 / 3, rel=1e-15)
        assert post.cov[0, 0] == pytest.approx(2 / 3, rel=1e-15)
        assert S[0, 0] == 3.0

    def test_zero_innovation(self, rng):
        P = random_spd(rng, 3)
        prior = GaussianDensity(rng.standard_normal(3), P)
        meas = AffineModel(rng.standard_normal((2, 3)), rng.standard_normal(2))
        y = meas.slope @ prior.mean + meas.offset
        post = measurement_update(prior, meas, np.eye(2), y).posterior
        np.testing.assert_allclose(post.mean, prior.mean, atol=1e-14)

    def test_joseph_equals_short_form(self, rng):
        for _ in range(100):
            n, m = rng.integers(1, 6), rng.integers(1, 4)
            P, R = random_spd(rng, n), random_spd(rng, m, 0.5)
            A = rng.standard_normal((m, n))
            prior = GaussianDensity(rng.standard_normal(n), P)
            post, gain, _, _ = measurement_update(prior, AffineModel(A, np.zeros(m)), R, rng.standard_normal(m))
            short = P - gain.gain @ A @ P
            assert np.linalg.norm(post.cov - short) <= 1e-10 * np.linalg.norm(short)

    def test_joseph_psd_under_gain_perturbation(self, rng):
        for _ in range(100):
            n, m = 4, 2
            P, R = random_spd(rng, n), random_spd(rng, m)
            A = rng.standard_normal((m, n))
            K = np.linalg.solve(A @ P @ A.T + R, A @ P).T + 1e-8 * rng.standard_normal((n, m))
            C = joseph_covariance(P, K, A, R)
            assert np.array_equal(C, C.T)
            assert np.linalg.eigvalsh(C).min() >= -1e-9 * np.trace(C) / n

    def test_omega_equals_inflated_noise(self, rng):
        P, R, Om = random_spd(rng, 3), random_spd(rng, 2), random_spd(rng, 2)
        A = rng.standard_normal((2, 3))
        prior = GaussianDensity(rng.standard_normal(3), P)
        y = rng.standard_normal(2)
        a = measurement_update(prior, AffineModel(A, np.zeros(2), Om), R, y)
        b = measurement_update(prior, AffineModel(A, np.zeros(2)), R + Om, y)
        np.testing.assert_allclose(a.posterior.mean, b.posterior.mean, rtol=1e-13)
        np.testing.assert_allclose(a.posterior.cov, b.posterior.cov, rtol=1e-13)

    def test_singular_innovation(self):
        with pytest.raises(SingularInnovation):
            measurement_update(g1(0, 0), AffineModel([[1]], [0]), [[0]], [1])

    def test_dimensions(self):
        with pytest.raises(DimensionMismatch):
            measurement_update(g1(0, 1), AffineModel([[1]], [0]), [[1]], [1, 2])


class TestSmoothingStep:
    def test_no_new_information(self, rng):
        P, Q = random_spd(rng, 3), random_spd(rng, 3)
        dyn = AffineModel(rng.standard_normal((3, 3)), rng.standard_normal(3))
        filt = GaussianDensity(rng.standard_normal(3), P)
        pred = time_update(filt, dyn, Q)
        smoothed, _ = smoothing_step(filt, pred, pred, dyn, Q)
        np.testing.assert_array_equal(smoothed.mean, filt.mean)
        np.testing.assert_allclose(smoothed.cov, filt.cov, atol=1e-14)

    def test_scalar_chain(self):
        dyn = AffineModel([[1]], [0])
        filt = g1(1, 1)
        pred = time_update(filt, dyn, [[1]])
        assert pred == g1(1, 2)
        smoothed, gain = smoothing_step(filt, pred, g1(2, 1), dyn, [[1]])
        np.testing.assert_allclose([gain.gain[0, 0], smoothed.mean[0], smoothed.cov[0, 0]], [0.5, 1.5, 0.75], rtol=1e-15)

    def test_inconsistent_prediction_asserts(self):
        dyn = AffineModel([[1]], [0])
        with pytest.raises(AssertionError):
            smoothing_step(g1(1, 1), g1(1, 3), g1(2, 1), dyn, [[1]])

    def test_singular_prediction(self):
        dyn = AffineModel([[0]], [0])
        with pytest.raises(SingularPrediction):
            smoothing_step(g1(1, 1), g1(0, 0), g1(0, 0), dyn, [[0]])


def _linear_system(rng, n, m, K):
    F = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    b = 0.1 * rng.standard_normal(n)
    Q = random_spd(rng, n, 0.1)
    H = rng.standard_normal((m, n))
    d = rng.standard_normal(m)
    R = random_spd(rng, m, 0.5)
    m0, P0 = rng.standard_normal(n), random_spd(rng, n)
    x = m0 + np.linalg.cholesky(P0) @ rng.standard_normal(n)
    ys = []
    for _ in range(K):
        x = F @ x + b + np.linalg.cholesky(Q) @ rng.standard_normal(n)
        ys.append(H @ x + d + np.linalg.cholesky(R) @ rng.standard_normal(m))
    return m0, P0, F, b, Q, H, d, R, np.array(ys)


def _filter_and_smooth(m0, P0, F, b, Q, H, d, R, ys):
    dyn, meas = AffineModel(F, b), AffineModel(H, d)
    filtered, predicted = [GaussianDensity(m0, P0)], []
    for y in ys:
        predicted.append(time_update(filtered[-1], dyn, Q))
        filtered.append(measurement_update(predicted[-1], meas, R, y).posterior)
    return filtered, predicted, rts_smooth(filtered, predicted, [dyn] * len(ys), Q)


class TestBatchOracle:
    @pytest.mark.parametrize("n, m, K", [(1, 1, 5), (2, 1, 20), (3, 2, 20), (3, 3, 12)])
    def test_filter_smoother_match_least_squares(self, rng, n, m, K):
        system = _linear_system(rng, n, m, K)
        filtered, _, smoothed = _filter_and_smooth(*system)
        ref_m, ref_P = oracles.batch_smoother(*system)
        for k in range(K + 1):
            np.testing.assert_allclose(smoothed[k].mean, ref_m[k], atol=1e-8)
            np.testing.assert_allclose(smoothed[k].cov, ref_P[k], atol=1e-8)
        # filtered marginals match the batch solution truncated at each k
        for k in (1, K // 2, K):
            tm, tP = oracles.batch_smoother(*system[:-1], system[-1][:k])
            np.testing.assert_allclose(filtered[k].mean, tm[-1], atol=1e-8)
            np.testing.assert_allclose(filtered[k].cov, tP[-1], atol=1e-8)

    def test_smoothing_never_increases_trace(self, rng):
        system = _linear_system(rng, 3, 2, 50)
        filtered, _, smoothed = _filter_and_smooth(*system)
        for f, s in zip(filtered, smoothed):
            assert np.trace(s.cov) <= np.trace(f.cov) + 1e-12

    def test_rts_smooth_lengths(self):
        with pytest.raises(DimensionMismatch):
            rts_smooth([g1(0, 1)], [g1(0, 1)], [], [[1]])


def test_symmetrization_invariance(rng):
    # a covariance perturbed by 1e-13 off-symmetry gives the same outputs
    P = random_spd(rng, 3)
    skew = np.triu(np.full((3, 3), 1e-13), 1)
    dyn = AffineModel(rng.standard_normal((3, 3)), np.zeros(3))
    meas = AffineModel(rng.standard_normal((2, 3)), np.zeros(2))
    y = rng.standard_normal(2)
    mean = rng.standard_normal(3)
    a = measurement_update(time_update(GaussianDensity(mean, P), dyn, np.eye(3)), meas, np.eye(2), y).posterior
    b = measurement_update(time_update(GaussianDensity(mean, P + skew), dyn, np.eye(3)), meas, np.eye(2), y).posterior
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-10)
    np.testing.assert_allclose(a.cov, b.cov, atol=1e-10)
