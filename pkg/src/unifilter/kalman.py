"""Affine Kalman smoother primitives: time update, measurement update, smoothing step.

Every linearization-error covariance ``Omega`` enters where the noise
covariance does: ``Q + Omega_f`` for the dynamics and ``R + Omega_h`` for the
measurement. All inverses are Cholesky solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, SingularInnovation, SingularPrediction
from .gaussian import GaussianDensity, cholesky, cholesky_solve, marginal_of_affine, symmetrize


@dataclass(frozen=True, eq=False)
class KalmanGain:
    gain: np.ndarray


@dataclass(frozen=True, eq=False)
class SmootherGain:
    gain: np.ndarray


@dataclass(frozen=True, eq=False)
class MeasurementUpdate:
    """Result of :func:`measurement_update`; unpacks as a 4-tuple."""

    posterior: GaussianDensity
    gain: KalmanGain
    innovation: np.ndarray
    innovation_cov: np.ndarray

    def __iter__(self):
        return iter((self.posterior, self.gain, self.innovation, self.innovation_cov))


def time_update(posterior, dyn, Q):
    """Predict ``N(A_f m + b_f, A_f P A_f^T + Q + Omega_f)``."""
    return marginal_of_affine(posterior, dyn, Q)


def _factor(mat, exc, what):
    factor = cholesky(mat) if np.isfinite(mat.sum()) else None
    if factor is None:
        raise exc(f"{what} is not positive definite")
    return factor


def measurement_update(prior, meas, R, y):
    """Condition ``prior`` on ``y = A_h x + b_h + r``, ``r ~ N(0, R + Omega_h)``.

    The covariance uses the Joseph form
    ``(I - K A_h) P (I - K A_h)^T + K (R + Omega_h) K^T``.

    Returns
    -------
    MeasurementUpdate
        ``(posterior, gain, innovation, innovation_cov)``.

    Raises
    ------
    SingularInnovation
        If the innovation covariance ``S`` is not positive definite.
    """
    a = meas.slope
    R = np.atleast_2d(np.asarray(R, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    m, n = a.shape
    if n != prior.dim or y.size != m or R.shape != (m, m):
        raise DimensionMismatch(
            f"measurement model is {m}x{n}, prior dim {prior.dim}, y length {y.size}, R {R.shape}"
        )
    P = prior.cov
    noise = R + meas.lin_err_cov
    PA = P @ a.T
    S = symmetrize(a @ PA + noise)
    chol = _factor(S, SingularInnovation, "innovation covariance")
    gain = cholesky_solve(chol, PA.T).T
    innovation = y - a @ prior.mean - meas.offset
    mean = prior.mean + gain @ innovation
    cov = joseph_covariance(P, gain, a, noise)
    return MeasurementUpdate(GaussianDensity(mean, cov), KalmanGain(gain), innovation, S)


def joseph_covariance(P, gain, slope, noise):
    """``(I - K A) P (I - K A)^T + K N K^T``; PSD for any gain ``K``."""
    ika = np.eye(P.shape[0]) - gain @ slope
    return symmetrize(ika @ P @ ika.T + gain @ noise @ gain.T)


def _consistent(a, b, tol=1e-8):
    return np.abs(a - b).max() <= tol * max(1.0, np.abs(b).max())


def smoothing_step(filtered_k, predicted_k1, smoothed_k1, dyn, Q):
    """Backward (RTS) correction of ``filtered_k`` from the smoothed ``k+1`` density.

    ``predicted_k1`` must equal ``time_update(filtered_k, dyn, Q)``; this is
    asserted when Python runs without ``-O``.

    Returns
    -------
    (GaussianDensity, SmootherGain)
    """
    a = dyn.slope
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    P = filtered_k.cov
    if a.shape != (smoothed_k1.dim, filtered_k.dim) or predicted_k1.dim != smoothed_k1.dim:
        raise DimensionMismatch("smoothing step dimensions disagree")
    PA = P @ a.T
    pred_cov = symmetrize(a @ PA + Q + dyn.lin_err_cov)
    assert _consistent(a @ filtered_k.mean + dyn.offset, predicted_k1.mean) and _consistent(
        pred_cov, predicted_k1.cov
    ), "predicted_k1 is inconsistent with time_update(filtered_k, dyn, Q)"
    chol = _factor(pred_cov, SingularPrediction, "predicted covariance")
    gain = cholesky_solve(chol, PA.T).T
    mean = filtered_k.mean + gain @ (smoothed_k1.mean - predicted_k1.mean)
    cov = P + gain @ (smoothed_k1.cov - pred_cov) @ gain.T
    return GaussianDensity(mean, cov), SmootherGain(gain)


def rts_smooth(filtered, predicted, dyn_models, Q):
    """Fixed-interval backward pass over affine dynamics.

    Parameters
    ----------
    filtered : sequence of GaussianDensity
        Filtered densities ``0..K``.
    predicted : sequence of GaussianDensity
        ``predicted[k]`` is the prediction of time ``k+1`` from ``filtered[k]``
        (length ``K``).
    dyn_models : sequence of AffineModel
        ``dyn_models[k]`` maps time ``k`` to ``k+1``.

    Returns
    -------
    list of GaussianDensity
        Smoothed densities ``0..K``; the last equals ``filtered[-1]``.
    """
    if not (len(predicted) == len(dyn_models) == len(filtered) - 1):
        raise DimensionMismatch("need len(filtered) - 1 predictions and dynamics models")
    smoothed = [filtered[-1]]
    for k in range(len(filtered) - 2, -1, -1):
        s, _ = smoothing_step(filtered[k], predicted[k], smoothed[0], dyn_models[k], Q)
        smoothed.insert(0, s)
    return smoothed
