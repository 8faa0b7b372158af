"""Analytical (Taylor) and statistical (distribution-based) linearization.

Both routes return an :class:`~unifilter.gaussian.AffineModel`
``g(x) ~ A x + b + eta`` with ``eta ~ N(0, Omega)``. Analytical linearization
always has ``Omega = 0``; statistical linearization estimates the moments

    zbar = E[g(x)],  Psi = E[(x - m)(g(x) - zbar)^T],  Phi = Cov[g(x)]

w.r.t. ``x ~ N(m, P)`` with a quadrature rule and sets ``A = Psi^T P^-1``,
``b = zbar - A m`` and ``Omega = Phi - A P A^T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .exceptions import DimensionMismatch, JacobianUnavailable, NonFiniteOutput, SingularDensity
from .gaussian import (
    AffineModel,
    WeightedSampleSet,
    cholesky_solve,
    project_psd,
    safe_cholesky,
    symmetrize,
)


@dataclass(frozen=True)
class Unscented:
    """Scaled unscented rule with ``2n+1`` points.

    ``kappa=None`` selects the classic ``3 - n`` heuristic at evaluation time.
    """

    alpha: float = 1.0
    beta: float = 0.0
    kappa: Optional[float] = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    def scaling(self, n):
        """Return ``(lambda, n + lambda)`` for state dimension ``n``."""
        kappa = 3.0 - n if self.kappa is None else self.kappa
        lam = self.alpha**2 * (n + kappa) - n
        if not n + lam > 0:
            raise ValueError(f"unscented scaling n + lambda = {n + lam} must be > 0 (n={n}, kappa={kappa})")
        return lam, n + lam


@dataclass(frozen=True)
class MonteCarlo:
    """Seeded Gaussian draws with uniform weights.

    With ``moment_match`` (default) the standard-normal draws are centred and
    whitened so that the sample mean and covariance reproduce the density
    exactly; this keeps statistical linearization exact on affine maps.
    """

    sample_count: int = 1000
    seed: int = 0
    moment_match: bool = True

    def __post_init__(self):
        if self.sample_count < 2:
            raise ValueError(f"sample_count must be >= 2, got {self.sample_count}")


@dataclass(frozen=True)
class CubatureSpherical:
    """Third-degree spherical-radial cubature rule with ``2n`` points."""


QuadratureRule = Union[Unscented, MonteCarlo, CubatureSpherical]


@dataclass(frozen=True, eq=False)
class StatMoments:
    zbar: np.ndarray
    psi: np.ndarray
    phi: np.ndarray


def finite_diff_jacobian(model, at, step=None):
    """Central-difference Jacobian of ``model`` at ``at``.

    Column ``j`` is ``(g(x + h e_j) - g(x - h e_j)) / (2 h)`` with
    ``h = 1e-6 * max(1, ||x||_inf)`` unless ``step`` is given.
    """
    x = np.asarray(at, dtype=float).reshape(-1)
    if step is None:
        step = 1e-6 * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    n = x.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        cols.append((model(x + e) - model(x - e)) / (2.0 * step))
    jac = np.column_stack(cols)
    if not np.all(np.isfinite(jac)):
        raise NonFiniteOutput(f"finite-difference Jacobian of {model.name!r} is not finite")
    return jac


def linearize_analytical(model, at, finite_difference=True):
    """First-order Taylor linearization of ``model`` about the point ``at``.

    Returns ``A = dg/dx(at)``, ``b = g(at) - A at`` and ``Omega = 0``. Falls
    back to :func:`finite_diff_jacobian` when the model has no Jacobian
    and ``finite_difference`` is true.
    """
    x = np.asarray(at, dtype=float).reshape(-1)
    if x.size != model.input_dim:
        raise DimensionMismatch(f"{model.name!r} expects input dim {model.input_dim}, got {x.size}")
    if model.affine is not None:
        return model.affine
    z = model(x)
    if model.jacobian is not None:
        jac = np.asarray(model.jacobian(x), dtype=float).reshape(z.size, x.size)
    elif finite_difference:
        jac = finite_diff_jacobian(model, x)
    else:
        raise JacobianUnavailable(f"{model.name!r} has no Jacobian and finite differencing is disabled")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(jac))):
        raise NonFiniteOutput(f"{model.name!r} returned non-finite values at {x}")
    return AffineModel(jac, z - jac @ x)


def _sigma_points(mean, chol, rule):
    n = mean.size
    if isinstance(rule, Unscented):
        lam, c = rule.scaling(n)
        offsets = math.sqrt(c) * chol.T
        points = np.vstack([mean, mean + offsets, mean - offsets])
        wm = np.full(2 * n + 1, 1.0 / (2.0 * c))
        wc = wm.copy()
        wm[0] = lam / c
        wc[0] = wm[0] + (1.0 - rule.alpha**2 + rule.beta)
        return points, wm, wc
    if isinstance(rule, CubatureSpherical):
        offsets = math.sqrt(n) * chol.T
        points = np.vstack([mean + offsets, mean - offsets])
        w = np.full(2 * n, 1.0 / (2 * n))
        return points, w, w
    if isinstance(rule, MonteCarlo):
        rng = np.random.default_rng(rule.seed)
        z = rng.standard_normal((rule.sample_count, n))
        if rule.moment_match:
            if rule.sample_count <= n:
                raise ValueError(f"moment-matched Monte Carlo needs more than {n} samples")
            z = z - z.mean(axis=0)
            whiten = np.linalg.cholesky(z.T @ z / rule.sample_count)
            z = np.linalg.solve(whiten, z.T).T
        points = mean + z @ chol.T
        w = np.full(rule.sample_count, 1.0 / rule.sample_count)
        return points, w, w
    raise TypeError(f"unknown quadrature rule {rule!r}")


def quadrature_points(density, rule):
    """Weighted points approximating expectations under ``density``."""
    chol = density.chol if density.chol is not None else safe_cholesky(density.cov)
    points, wm, wc = _sigma_points(density.mean, chol, rule)
    return WeightedSampleSet(points, wm, wc)


def _moments(model, mean, points, wm, wc):
    z = model.evaluate_many(points)
    if not np.all(np.isfinite(z)):
        raise NonFiniteOutput(f"{model.name!r} returned non-finite values at quadrature points")
    zbar = wm @ z
    dz = z - zbar
    dx = points - mean
    psi = (dx * wc[:, None]).T @ dz
    phi = symmetrize((dz * wc[:, None]).T @ dz)
    return StatMoments(zbar, psi, phi)


def statistical_moments(model, density, rule):
    """Quadrature estimates of ``E[g]``, ``Cov[x, g]`` and ``Cov[g]``."""
    if density.dim != model.input_dim:
        raise DimensionMismatch(f"{model.name!r} expects input dim {model.input_dim}, got {density.dim}")
    pts = quadrature_points(density, rule)
    return _moments(model, density.mean, pts.points, pts.weights_mean, pts.weights_cov)


def regression_terms(model, density, rule):
    """Return ``(A, b, Omega)`` of the statistical linear regression, unprojected.

    ``Omega`` may be slightly indefinite under quadrature error.

    Raises
    ------
    SingularDensity
        If ``density.cov`` is not positive definite.
    """
    if density.dim != model.input_dim:
        raise DimensionMismatch(f"{model.name!r} expects input dim {model.input_dim}, got {density.dim}")
    chol = density.chol
    if chol is None:
        raise SingularDensity("linearization density covariance is not positive definite")
    points, wm, wc = _sigma_points(density.mean, chol, rule)
    mom = _moments(model, density.mean, points, wm, wc)
    # A^T = P^-1 Psi
    slope = cholesky_solve(chol, mom.psi).T
    offset = mom.zbar - slope @ density.mean
    omega = symmetrize(mom.phi - slope @ density.cov @ slope.T)
    if not (np.all(np.isfinite(slope)) and np.all(np.isfinite(omega))):
        raise NonFiniteOutput(f"statistical linearization of {model.name!r} is not finite")
    return slope, offset, omega


def linearize_statistical(model, density, rule):
    """Statistical linear regression of ``model`` w.r.t. ``density``.

    ``Omega`` is projected onto the PSD cone by eigenvalue clipping.
    """
    if model.affine is not None:
        if density.dim != model.input_dim:
            raise DimensionMismatch(f"{model.name!r} expects input dim {model.input_dim}, got {density.dim}")
        return model.affine
    slope, offset, omega = regression_terms(model, density, rule)
    return AffineModel(slope, offset, project_psd(omega))
