"""Motion and sensor models for planar localization.

All functions broadcast over leading axes, so each model is usable as a
vectorized :class:`~unifilter.gaussian.NonlinearModel`. States start with the
planar position ``[x, y, ...]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg

from .exceptions import AtSensorSingularity
from .gaussian import NonlinearModel

#: ranges below this make the bearing undefined
MIN_RANGE = 1e-9


def wrap_angle(angle):
    """Wrap to the half-open interval (-pi, pi]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def ncv_matrices(dt, q):
    """Transition matrix and process covariance of the 2-d nearly-constant-velocity model.

    ``q`` is the continuous white-acceleration power spectral density.
    """
    eye = np.eye(2)
    F = np.block([[eye, dt * eye], [np.zeros((2, 2)), eye]])
    Q = q * np.block([[dt**3 / 3 * eye, dt**2 / 2 * eye], [dt**2 / 2 * eye, dt * eye]])
    return F, Q


def _ct_coefficients(omega, dt):
    # sin(w T)/w, (1 - cos(w T))/w and their w-derivatives, with series near w = 0
    small = np.abs(omega) < 1e-4
    w = np.where(small, 1.0, omega)
    s, c = np.sin(w * dt), np.cos(w * dt)
    a = np.where(small, dt - omega**2 * dt**3 / 6, s / w)
    b = np.where(small, omega * dt**2 / 2 - omega**3 * dt**4 / 24, (1 - c) / w)
    da = np.where(small, -omega * dt**3 / 3, (dt * c * w - s) / w**2)
    db = np.where(small, dt**2 / 2 - omega**2 * dt**4 / 8, (dt * s * w - (1 - c)) / w**2)
    return a, b, da, db


def coordinated_turn(x, dt):
    """Coordinated-turn transition for states ``[x, y, vx, vy, omega]``."""
    x = np.asarray(x, dtype=float)
    px, py, vx, vy, om = (x[..., i] for i in range(5))
    a, b, _, _ = _ct_coefficients(om, dt)
    s, c = np.sin(om * dt), np.cos(om * dt)
    return np.stack(
        [px + a * vx - b * vy, py + b * vx + a * vy, c * vx - s * vy, s * vx + c * vy, om], axis=-1
    )


def coordinated_turn_jacobian(x, dt):
    x = np.asarray(x, dtype=float)
    _, _, vx, vy, om = x
    a, b, da, db = _ct_coefficients(om, dt)
    s, c = math.sin(om * dt), math.cos(om * dt)
    return np.array(
        [
            [1.0, 0.0, a, -b, da * vx - db * vy],
            [0.0, 1.0, b, a, db * vx + da * vy],
            [0.0, 0.0, c, -s, -dt * s * vx - dt * c * vy],
            [0.0, 0.0, s, c, dt * c * vx - dt * s * vy],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )


@dataclass(frozen=True)
class NearlyConstantVelocity:
    """State ``[x, y, vx, vy]`` driven by white acceleration of PSD ``q``."""

    q: float = 0.1
    state_dim = 4

    def transition(self, x, dt):
        F, _ = ncv_matrices(dt, self.q)
        return np.asarray(x, dtype=float) @ F.T

    def process_cov(self, dt):
        return ncv_matrices(dt, self.q)[1]

    def model(self, dt):
        F, Q = ncv_matrices(dt, self.q)
        return NonlinearModel.from_affine(F, np.zeros(4), Q, name="ncv", exact=True)


@dataclass(frozen=True)
class CoordinatedTurn:
    """State ``[x, y, vx, vy, omega]``; ``q_turn`` is the turn-rate noise PSD."""

    q: float = 0.1
    q_turn: float = 1e-4
    state_dim = 5

    def transition(self, x, dt):
        return coordinated_turn(x, dt)

    def process_cov(self, dt):
        return scipy.linalg.block_diag(ncv_matrices(dt, self.q)[1], [[self.q_turn * dt]])

    def model(self, dt):
        return NonlinearModel(
            func=lambda x: coordinated_turn(x, dt),
            noise_cov=self.process_cov(dt),
            input_dim=5,
            jacobian=lambda x: coordinated_turn_jacobian(x, dt),
            name="coordinated_turn",
            vectorized=True,
        )


def _point_offsets(x, sensor_pos):
    dx, dy = x[0] - sensor_pos[0], x[1] - sensor_pos[1]
    r = math.hypot(dx, dy)
    if r < MIN_RANGE:
        raise AtSensorSingularity(f"state within {MIN_RANGE:g} m of sensor at {tuple(sensor_pos)}")
    return dx, dy, r


def _offsets(x, sensor_pos):
    x = np.asarray(x, dtype=float)
    d = x[..., :2] - np.asarray(sensor_pos, dtype=float)
    r = np.hypot(d[..., 0], d[..., 1])
    if np.any(r < MIN_RANGE):
        raise AtSensorSingularity(f"state within {MIN_RANGE:g} m of sensor at {tuple(sensor_pos)}")
    return d, r


@dataclass(frozen=True)
class RangeBearing:
    position: Tuple[float, float] = (0.0, 0.0)
    sigma_r: float = 1.0
    sigma_theta: float = 0.1
    angular = (False, True)

    @property
    def dim(self):
        return 2

    def measure(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            dx, dy, r = _point_offsets(x, self.position)
            return np.array([r, math.atan2(dy, dx)])
        d, r = _offsets(x, self.position)
        return np.stack([r, np.arctan2(d[..., 1], d[..., 0])], axis=-1)

    def jacobian(self, x, state_dim):
        dx, dy, r = _point_offsets(x, self.position)
        jac = np.zeros((2, state_dim))
        jac[0, 0], jac[0, 1] = dx / r, dy / r
        jac[1, 0], jac[1, 1] = -dy / r**2, dx / r**2
        return jac

    def noise_cov(self):
        return np.diag([self.sigma_r**2, self.sigma_theta**2])


@dataclass(frozen=True)
class RangeOnly:
    position: Tuple[float, float] = (0.0, 0.0)
    sigma_r: float = 1.0
    angular = (False,)

    @property
    def dim(self):
        return 1

    def measure(self, x):
        _, r = _offsets(x, self.position)
        return r[..., None]

    def jacobian(self, x, state_dim):
        dx, dy, r = _point_offsets(x, self.position)
        jac = np.zeros((1, state_dim))
        jac[0, 0], jac[0, 1] = dx / r, dy / r
        return jac

    def noise_cov(self):
        return np.array([[self.sigma_r**2]])


@dataclass(frozen=True)
class Position:
    """Linear sensor observing the planar position directly."""

    sigma: float = 1.0
    angular = (False, False)

    @property
    def dim(self):
        return 2

    def measure(self, x):
        return np.asarray(x, dtype=float)[..., :2].copy()

    def jacobian(self, x, state_dim):
        return np.eye(2, state_dim)

    def noise_cov(self):
        return self.sigma**2 * np.eye(2)


def measure_all(sensors, x):
    if len(sensors) == 1:
        return sensors[0].measure(x)
    return np.concatenate([s.measure(x) for s in sensors], axis=-1)


def sensor_model(sensors, state_dim):
    """Stack ``sensors`` into one measurement model with wrapped angular residuals."""
    sensors = tuple(sensors)
    angular = np.concatenate([np.asarray(s.angular, dtype=bool) for s in sensors])
    noise = scipy.linalg.block_diag(*[s.noise_cov() for s in sensors])

    def residual(y, y_pred):
        r = y - y_pred
        if angular.any():
            r = np.where(angular, wrap_angle(r), r)
        return r

    return NonlinearModel(
        func=lambda x: measure_all(sensors, x),
        noise_cov=noise,
        input_dim=state_dim,
        jacobian=lambda x: np.vstack([s.jacobian(x, state_dim) for s in sensors]) if len(sensors) > 1 else sensors[0].jacobian(x, state_dim),
        residual=residual,
        name="+".join(type(s).__name__ for s in sensors),
        vectorized=True,
    )


def range_bearing_model(sensor_pos, sigma_r=1.0, sigma_theta=0.1, state_dim=4):
    """Range and bearing from a sensor at ``sensor_pos``; bearing residual wrapped to (-pi, pi]."""
    return sensor_model([RangeBearing(tuple(sensor_pos), sigma_r, sigma_theta)], state_dim)
