"""One general linearization-based Gaussian filter step and its configurations.

A configuration is a pair (:class:`Linearizer`, :class:`IterationPolicy`).
The linearizer picks Taylor or statistical linearization; the policy picks
the filter class:

``Standard``
    linearize once, time update, measurement update (EKF, UKF, CKF).
``Iterated``
    re-linearize the measurement about successive posterior iterates and
    redo the measurement update from the same prior (IEKF, IUKF/IPLF).
``DynamicallyIterated``
    additionally smooth the previous state with a lag-one smoothing step and
    re-linearize the dynamics about the smoothed density (DIEKF, DIPLF).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DivergedNonFinite, FilterError, NonFiniteOutput, PointRequiresAnalytical, UnknownFilterName
from .gaussian import AffineModel, GaussianDensity
from .kalman import measurement_update, smoothing_step, time_update
from .linearize import CubatureSpherical, MonteCarlo, Unscented, linearize_analytical, linearize_statistical


class FilterClass(str, enum.Enum):
    STANDARD = "Standard"
    ITERATED = "Iterated"
    DYNAMICALLY_ITERATED = "DynamicallyIterated"


@dataclass(frozen=True)
class Linearizer:
    """Either ``kind="analytical"`` or ``kind="statistical"`` with a quadrature ``rule``."""

    kind: str = "analytical"
    rule: Optional[object] = None

    def __post_init__(self):
        if self.kind not in ("analytical", "statistical"):
            raise ValueError(f"unknown linearizer kind {self.kind!r}")
        if self.kind == "statistical" and not isinstance(self.rule, (Unscented, MonteCarlo, CubatureSpherical)):
            raise ValueError("statistical linearizer needs a quadrature rule")
        if self.kind == "analytical" and self.rule is not None:
            raise ValueError("analytical linearizer takes no quadrature rule")

    @classmethod
    def analytical(cls):
        return cls("analytical")

    @classmethod
    def statistical(cls, rule=None):
        return cls("statistical", Unscented() if rule is None else rule)

    @property
    def is_analytical(self):
        return self.kind == "analytical"

    @property
    def label(self):
        if self.is_analytical:
            return "Analytical"
        return f"Statistical({type(self.rule).__name__})"


@dataclass(frozen=True)
class IterationPolicy:
    """Filter class plus loop control.

    ``tol`` bounds the relative mean change ``||dx|| / max(1, ||x||)`` between
    successive posterior iterates; ``damping`` scales the step of the
    linearization point towards each new iterate.
    """

    filter_class: FilterClass = FilterClass.STANDARD
    max_iters: int = 1
    tol: float = 1e-8
    damping: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "filter_class", FilterClass(self.filter_class))
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol >= 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")

    @property
    def effective_max_iters(self):
        return 1 if self.filter_class is FilterClass.STANDARD else self.max_iters


@dataclass(frozen=True, eq=False)
class StepRecord:
    """Diagnostic trace of one general step.

    ``smoothed_prev`` is the lag-one smoothed density of the previous time
    step; it is present only for the dynamically iterated class.
    """

    posterior: GaussianDensity
    prior: GaussianDensity
    smoothed_prev: Optional[GaussianDensity]
    iterations_used: int
    converged: bool
    innovation: np.ndarray
    innovation_cov: np.ndarray
    lin_dyn: AffineModel
    lin_meas: AffineModel


def _linearize(model, about, lin):
    if lin.is_analytical:
        point = about.mean if isinstance(about, GaussianDensity) else about
        return linearize_analytical(model, point)
    if not isinstance(about, GaussianDensity):
        raise PointRequiresAnalytical("statistical linearization needs a density, got a bare point")
    return linearize_statistical(model, about, lin.rule)


def linearize_dynamics(dyn_model, about, lin):
    """Linearize ``dyn_model`` about a point or density according to ``lin``.

    Analytical linearization uses the point (or the density mean);
    statistical linearization requires a density.
    """
    return _linearize(dyn_model, about, lin)


linearize_measurement = linearize_dynamics


def _update(prior, lin_meas, meas, y):
    # circular components are wrapped by the model's residual
    y_pred = lin_meas.slope @ prior.mean + lin_meas.offset
    y_eff = y_pred + meas.residual(y, y_pred)
    return measurement_update(prior, lin_meas, meas.noise_cov, y_eff)


def _damped(previous, new, damping):
    if damping == 1.0:
        return new
    prev_mean = previous.mean if isinstance(previous, GaussianDensity) else np.asarray(previous)
    return GaussianDensity(prev_mean + damping * (new.mean - prev_mean), new.cov)


def _relative_change(old, new):
    return np.linalg.norm(new - old) / max(1.0, np.linalg.norm(new))


def general_step(prev_posterior, y, dyn, meas, lin, policy, meas_lin_init=None, dyn_lin_init=None):
    """Run one time step of the general linearization-based filter.

    Parameters
    ----------
    prev_posterior : GaussianDensity
        Posterior at the previous time.
    y : array_like
        Measurement at the current time.
    dyn, meas : NonlinearModel
    lin : Linearizer
    policy : IterationPolicy
    meas_lin_init, dyn_lin_init : GaussianDensity, optional
        Override the first measurement (default: prior) and dynamics
        (default: ``prev_posterior``) linearization densities.

    Returns
    -------
    StepRecord
        The last iterate; there is no objective-based rollback.

    Raises
    ------
    DivergedNonFinite
        If any iterate is non-finite.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    Q = dyn.noise_cov
    dynamic = policy.filter_class is FilterClass.DYNAMICALLY_ITERATED
    n_max = policy.effective_max_iters
    try:
        dyn_about = prev_posterior if dyn_lin_init is None else dyn_lin_init
        lin_dyn = _linearize(dyn, dyn_about, lin)
        prior = time_update(prev_posterior, lin_dyn, Q)
        meas_about = prior if meas_lin_init is None else meas_lin_init
        lin_meas = _linearize(meas, meas_about, lin)
        post, _, innovation, innovation_cov = _update(prior, lin_meas, meas, y)

        used, converged = 1, n_max == 1
        for _ in range(1, n_max):
            meas_about = _damped(meas_about, post, policy.damping)
            if dynamic:
                smoothed, _ = smoothing_step(prev_posterior, prior, post, lin_dyn, Q)
                dyn_about = _damped(dyn_about, smoothed, policy.damping)
                lin_dyn = _linearize(dyn, dyn_about, lin)
                prior = time_update(prev_posterior, lin_dyn, Q)
            lin_meas = _linearize(meas, meas_about, lin)
            new_post, _, innovation, innovation_cov = _update(prior, lin_meas, meas, y)
            change = _relative_change(post.mean, new_post.mean)
            post = new_post
            if change < policy.tol:
                converged = True
                break
            used += 1

        smoothed_prev = None
        if dynamic:
            smoothed_prev, _ = smoothing_step(prev_posterior, prior, post, lin_dyn, Q)
    except NonFiniteOutput as err:
        if isinstance(err, DivergedNonFinite):
            raise
        raise DivergedNonFinite(str(err)) from err
    return StepRecord(post, prior, smoothed_prev, used, converged, innovation, innovation_cov, lin_dyn, lin_meas)


def run_filter(init, measurements, dyn, meas, lin, policy):
    """Fold :func:`general_step` over ``measurements``.

    Record ``k`` consumed ``measurements[k]``. On failure the raised
    :class:`FilterError` carries the failing index in ``step``.
    """
    records = []
    posterior = init
    for k, y in enumerate(measurements):
        try:
            rec = general_step(posterior, y, dyn, meas, lin, policy)
        except FilterError as err:
            err.step = k
            raise
        records.append(rec)
        posterior = rec.posterior
    return records


def timeline(records, smoothed=True):
    """Per-step densities; with ``smoothed`` entry ``k-1`` is replaced by ``records[k].smoothed_prev``.

    The replacement only affects reporting; the filter recursion always
    continues from each step's own posterior.
    """
    out = [r.posterior for r in records]
    if smoothed:
        for k in range(1, len(records)):
            if records[k].smoothed_prev is not None:
                out[k - 1] = records[k].smoothed_prev
    return out


_ITER_DEFAULTS = dict(max_iters=10, tol=1e-8, damping=1.0)

_ZOO = {
    "EKF": ("analytical", None, FilterClass.STANDARD),
    "UKF": ("statistical", Unscented, FilterClass.STANDARD),
    "CKF": ("statistical", CubatureSpherical, FilterClass.STANDARD),
    "IEKF": ("analytical", None, FilterClass.ITERATED),
    "IUKF": ("statistical", Unscented, FilterClass.ITERATED),
    "IPLF": ("statistical", Unscented, FilterClass.ITERATED),
    "DIEKF": ("analytical", None, FilterClass.DYNAMICALLY_ITERATED),
    "DIUKF": ("statistical", Unscented, FilterClass.DYNAMICALLY_ITERATED),
    "DIPLF": ("statistical", Unscented, FilterClass.DYNAMICALLY_ITERATED),
}

ZOO_NAMES = tuple(_ZOO)


def filter_zoo(name):
    """Return ``(Linearizer, IterationPolicy)`` for a named filter (case-insensitive)."""
    try:
        kind, rule_cls, cls = _ZOO[name.upper()]
    except (KeyError, AttributeError):
        raise UnknownFilterName(f"unknown filter {name!r}; known: {', '.join(ZOO_NAMES)}") from None
    lin = Linearizer(kind, None if rule_cls is None else rule_cls())
    if cls is FilterClass.STANDARD:
        return lin, IterationPolicy(cls)
    return lin, IterationPolicy(cls, **_ITER_DEFAULTS)

