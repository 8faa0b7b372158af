"""Gaussian densities, affine and nonlinear models, and safe covariance algebra.

Column-vector convention throughout: states are 1-d arrays of length ``n``
and every model maps them to 1-d arrays of length ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lapack

from .exceptions import (
    DimensionMismatch,
    FactorizationFailed,
    NonFiniteOutput,
    NotPositiveSemiDefinite,
)

#: relative eigenvalue floor below which a covariance is rejected
PSD_TOL = 1e-9
#: jitter escalation range used by :func:`safe_cholesky`, relative to trace/n
JITTER_START = 1e-12
JITTER_CAP = 1e-6


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def cholesky(a):
    """Lower Cholesky factor of a symmetric matrix, or None if it is not positive definite.

    Calls LAPACK directly; the numpy wrapper dominates run time for the
    small matrices used here.
    """
    factor, info = lapack.dpotrf(a, lower=1, clean=1)
    return factor if info == 0 else None


def symmetrize(cov):
    cov = np.asarray(cov, dtype=float)
    return 0.5 * (cov + cov.T)


def psd_floor(cov):
    """Smallest eigenvalue tolerated for ``cov``: ``-PSD_TOL * |trace| / n``."""
    n = cov.shape[0]
    return -PSD_TOL * abs(np.trace(cov)) / n


def check_psd(cov, what="covariance"):
    """Raise :class:`NotPositiveSemiDefinite` unless ``cov`` passes the floor.

    Returns the Cholesky factor when ``cov`` is positive definite, else None.
    """
    if not np.isfinite(cov.sum()):
        raise NotPositiveSemiDefinite(f"{what} has non-finite entries")
    factor = cholesky(cov)
    if factor is not None:
        return factor
    min_eig = np.linalg.eigvalsh(cov)[0]
    if min_eig < psd_floor(cov):
        raise NotPositiveSemiDefinite(
            f"{what} has eigenvalue {min_eig:.3e} below floor {psd_floor(cov):.3e}"
        )
    return None


def project_psd(cov):
    """Clip negative eigenvalues of a symmetric matrix at zero."""
    cov = symmetrize(cov)
    if cholesky(cov) is not None:
        return cov
    w, v = np.linalg.eigh(cov)
    if w[0] >= 0.0:
        return cov
    return symmetrize((v * np.clip(w, 0.0, None)) @ v.T)


def safe_cholesky(cov):
    """Lower Cholesky factor of ``cov`` with bounded diagonal jitter.

    Tries the bare matrix first, then adds ``jitter * I`` for jitter
    ``1e-12 * trace/n, 1e-11 * trace/n, ..., 1e-6 * trace/n``.

    Raises
    ------
    FactorizationFailed
        If no jitter up to the cap yields a factorization.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise FactorizationFailed("matrix has non-finite entries")
    factor = cholesky(cov)
    if factor is not None:
        return factor
    n = cov.shape[0]
    scale = abs(np.trace(cov)) / n
    eye = np.eye(n)
    jitter = JITTER_START * scale
    while scale > 0 and jitter <= JITTER_CAP * scale * (1 + 1e-9):
        factor = cholesky(cov + jitter * eye)
        if factor is not None:
            return factor
        jitter *= 10.0
    raise FactorizationFailed(
        f"Cholesky failed with jitter up to {JITTER_CAP:g}*trace/n (trace/n={scale:.3e})"
    )


def cholesky_solve(factor, rhs):
    """Solve ``L L^T X = rhs`` given the lower factor ``L``."""
    x, info = lapack.dpotrs(factor, rhs, lower=1)
    if info != 0:
        raise FactorizationFailed(f"dpotrs failed with info={info}")
    return x


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    """Multivariate normal density ``N(mean, cov)``.

    The covariance is symmetrized on construction and rejected if it is not
    positive semi-definite up to ``PSD_TOL``. Arrays are read-only.
    ``chol`` holds the lower Cholesky factor when ``cov`` is positive
    definite and is None otherwise.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: Optional[np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"mean has length {mean.size} but cov has shape {cov.shape}"
            )
        # a single reduction catches any nan/inf entry
        if not np.isfinite(mean.sum() + cov.sum()):
            raise NonFiniteOutput("density has non-finite entries")
        cov = 0.5 * (cov + cov.T)
        chol = check_psd(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        if chol is not None:
            chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self):
        return self.mean.size

    def __eq__(self, other):
        if not isinstance(other, GaussianDensity):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    def __repr__(self):
        return f"GaussianDensity(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


def make_gaussian(mean, cov):
    """Build a :class:`GaussianDensity`; ``cov`` is symmetrized and PSD-checked."""
    return GaussianDensity(mean, cov)


@dataclass(frozen=True, eq=False)
class AffineModel:
    """Affine map ``z = slope @ x + offset + eta`` with ``eta ~ N(0, lin_err_cov)``."""

    slope: np.ndarray
    offset: np.ndarray
    lin_err_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        slope = np.array(self.slope, dtype=float)
        if slope.ndim != 2:
            raise DimensionMismatch(f"slope must be 2-d, got shape {slope.shape}")
        m = slope.shape[0]
        offset = np.array(self.offset, dtype=float).reshape(-1)
        if offset.size != m:
            raise DimensionMismatch(f"slope has {m} rows but offset has length {offset.size}")
        if self.lin_err_cov is None:
            omega = np.zeros((m, m))
        else:
            omega = np.asarray(self.lin_err_cov, dtype=float)
            if omega.shape != (m, m):
                raise DimensionMismatch(f"lin_err_cov must be {m}x{m}, got {omega.shape}")
            omega = 0.5 * (omega + omega.T)
            if omega.any():
                check_psd(omega, "linearization error covariance")
        for a in (slope, offset, omega):
            a.setflags(write=False)
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "lin_err_cov", omega)

    @property
    def input_dim(self):
        return self.slope.shape[1]

    @property
    def output_dim(self):
        return self.slope.shape[0]

    def __call__(self, x):
        return self.slope @ x + self.offset

    def __eq__(self, other):
        if not isinstance(other, AffineModel):
            return NotImplemented
        return (
            np.array_equal(self.slope, other.slope)
            and np.array_equal(self.offset, other.offset)
            and np.array_equal(self.lin_err_cov, other.lin_err_cov)
        )


def _subtract(y, y_pred):
    return y - y_pred


@dataclass(frozen=True, eq=False)
class NonlinearModel:
    """Nonlinear map ``x -> func(x)`` with additive noise ``N(0, noise_cov)``.

    Parameters
    ----------
    func : callable
        Pure map from an ``(input_dim,)`` array to an ``(output_dim,)`` array.
    noise_cov : array_like
        Symmetric positive definite additive-noise covariance (Q or R).
    input_dim : int
    jacobian : callable, optional
        Map from ``x`` to the ``(output_dim, input_dim)`` Jacobian. When
        missing, analytical linearization falls back to finite differences.
    residual : callable, optional
        ``residual(y, y_pred)`` used for innovations; defaults to subtraction.
        Circular measurement components are wrapped here.
    name : str
    vectorized : bool
        If true, ``func`` also accepts a ``(N, input_dim)`` batch and returns
        ``(N, output_dim)``; quadrature then evaluates all points in one call.
    affine : AffineModel, optional
        Exact affine form of ``func`` (with zero ``lin_err_cov``). Both
        linearizers return it unchanged, since linearizing an affine map
        reproduces it.
    """

    func: Callable[[np.ndarray], np.ndarray]
    noise_cov: np.ndarray
    input_dim: int
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    residual: Callable[[np.ndarray, np.ndarray], np.ndarray] = _subtract
    name: str = "model"
    vectorized: bool = False
    affine: Optional["AffineModel"] = None
    noise_chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        noise = symmetrize(np.atleast_2d(np.array(self.noise_cov, dtype=float)))
        if noise.shape[0] != noise.shape[1]:
            raise DimensionMismatch(f"noise_cov must be square, got {noise.shape}")
        chol = cholesky(noise) if np.isfinite(noise.sum()) else None
        if chol is None:
            raise NotPositiveSemiDefinite(f"noise_cov of {self.name!r} is not positive definite")
        object.__setattr__(self, "noise_cov", _frozen(noise))
        object.__setattr__(self, "noise_chol", _frozen(chol))
        object.__setattr__(self, "input_dim", int(self.input_dim))
        if self.affine is not None:
            if self.affine.slope.shape != (noise.shape[0], self.input_dim) or self.affine.lin_err_cov.any():
                raise DimensionMismatch("affine form must be output_dim x input_dim with zero lin_err_cov")

    @property
    def output_dim(self):
        return self.noise_cov.shape[0]

    def __call__(self, x):
        return np.asarray(self.func(x), dtype=float).reshape(-1)

    def evaluate_many(self, points):
        points = np.atleast_2d(points)
        if self.vectorized:
            return np.asarray(self.func(points), dtype=float).reshape(points.shape[0], -1)
        return np.array([self(p) for p in points]).reshape(points.shape[0], -1)

    @classmethod
    def from_affine(cls, slope, offset, noise_cov, name="affine", exact=False):
        """Wrap the affine map ``slope @ x + offset`` with its exact Jacobian.

        With ``exact`` the model also carries its affine form, so
        linearization skips differentiation and quadrature.
        """
        slope = _frozen(np.atleast_2d(slope))
        offset = _frozen(np.asarray(offset, dtype=float).reshape(-1))
        return cls(
            func=lambda x: x @ slope.T + offset,
            noise_cov=noise_cov,
            input_dim=slope.shape[1],
            jacobian=lambda x: slope,
            name=name,
            vectorized=True,
            affine=AffineModel(slope, offset) if exact else None,
        )


@dataclass(frozen=True, eq=False)
class WeightedSampleSet:
    """Points with separate mean and covariance weights (rows of ``points``)."""

    points: np.ndarray
    weights_mean: np.ndarray
    weights_cov: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.array(self.points, dtype=float))
        wm = np.array(self.weights_mean, dtype=float).reshape(-1)
        wc = np.array(self.weights_cov, dtype=float).reshape(-1)
        if not (points.shape[0] == wm.size == wc.size) or wm.size < 1:
            raise DimensionMismatch("points and weight lists must have equal length >= 1")
        if abs(wm.sum() - 1.0) > 1e-12:
            raise ValueError(f"mean weights sum to {wm.sum()!r}, expected 1")
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "weights_mean", _frozen(wm))
        object.__setattr__(self, "weights_cov", _frozen(wc))

    def __len__(self):
        return self.points.shape[0]


def marginal_of_affine(density, model, noise_cov):
    """Push ``density`` through ``model`` and add ``noise_cov``.

    Returns ``N(A m + b, A P A^T + noise_cov + Omega)``.
    """
    a = model.slope
    noise_cov = np.atleast_2d(np.asarray(noise_cov, dtype=float))
    if a.shape[1] != density.dim:
        raise DimensionMismatch(f"model expects input dim {a.shape[1]}, density has {density.dim}")
    if noise_cov.shape != (a.shape[0], a.shape[0]):
        raise DimensionMismatch(f"noise_cov must be {a.shape[0]}x{a.shape[0]}, got {noise_cov.shape}")
    mean = a @ density.mean + model.offset
    cov = a @ density.cov @ a.T + noise_cov + model.lin_err_cov
    return GaussianDensity(mean, cov)
