"""scikit-learn style front end for the general filter."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .gaussian import GaussianDensity, NonlinearModel
from .unified import IterationPolicy, Linearizer, filter_zoo, run_filter, timeline


class UnifiedFilter(TransformerMixin, BaseEstimator):
    """Linearization-based Gaussian filter over a measurement sequence.

    Rows of ``X`` are the measurements ``y_1..y_K``; :meth:`transform` returns
    the matching state estimates. ``method`` names a preset from the filter
    zoo (``"EKF"``, ``"IPLF"``, ``"DIEKF"``, ...); ``linearizer`` and ``policy``
    override its pieces.

    Parameters
    ----------
    dynamics, measurement : NonlinearModel
    init_mean, init_cov : array_like
        Initial density of the state before the first measurement.
    method : str, default="EKF"
    linearizer : Linearizer, optional
    policy : IterationPolicy, optional
    propagate_smoothed : bool, default=False
        Report the lag-one smoothed estimate for time ``k-1`` once step ``k``
        has run (dynamically iterated filters only).

    Attributes
    ----------
    records_ : list of StepRecord
    means_ : ndarray of shape (n_steps, n_states)
    covariances_ : ndarray of shape (n_steps, n_states, n_states)
    iterations_ : ndarray of shape (n_steps,)
    n_features_in_ : int
        Measurement dimension.
    """

    def __init__(
        self,
        dynamics=None,
        measurement=None,
        init_mean=None,
        init_cov=None,
        method="EKF",
        linearizer=None,
        policy=None,
        propagate_smoothed=False,
    ):
        self.dynamics = dynamics
        self.measurement = measurement
        self.init_mean = init_mean
        self.init_cov = init_cov
        self.method = method
        self.linearizer = linearizer
        self.policy = policy
        self.propagate_smoothed = propagate_smoothed

    def _resolve(self):
        for param in ("dynamics", "measurement"):
            if not isinstance(getattr(self, param), NonlinearModel):
                raise ValueError(f"{param} must be a NonlinearModel, got {getattr(self, param)!r}")
        if self.init_mean is None or self.init_cov is None:
            raise ValueError("init_mean and init_cov are required")
        lin, policy = filter_zoo(self.method)
        if self.linearizer is not None:
            if not isinstance(self.linearizer, Linearizer):
                raise ValueError(f"linearizer must be a Linearizer, got {self.linearizer!r}")
            lin = self.linearizer
        if self.policy is not None:
            if not isinstance(self.policy, IterationPolicy):
                raise ValueError(f"policy must be an IterationPolicy, got {self.policy!r}")
            policy = self.policy
        return GaussianDensity(self.init_mean, self.init_cov), lin, policy

    def _check_X(self, X, reset):
        if not isinstance(self.measurement, NonlinearModel):
            raise ValueError(f"measurement must be a NonlinearModel, got {self.measurement!r}")
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != self.measurement.output_dim:
            raise ValueError(
                f"X has {X.shape[1]} features, measurement model produces {self.measurement.output_dim}"
            )
        if reset:
            self.n_features_in_ = X.shape[1]
        return X

    def _run(self, X):
        init, lin, policy = self._resolve()
        return run_filter(init, X, self.dynamics, self.measurement, lin, policy), lin, policy

    def fit(self, X, y=None):
        """Filter the measurement sequence ``X``; ``y`` is ignored."""
        X = self._check_X(X, reset=True)
        records, lin, policy = self._run(X)
        est = timeline(records, smoothed=self.propagate_smoothed)
        self.records_ = records
        self.linearizer_ = lin
        self.policy_ = policy
        self.means_ = np.array([e.mean for e in est])
        self.covariances_ = np.array([e.cov for e in est])
        self.iterations_ = np.array([r.iterations_used for r in records])
        return self

    def transform(self, X):
        """State estimates for the measurement sequence ``X``."""
        check_is_fitted(self, "records_")
        X = self._check_X(X, reset=False)
        records, _, _ = self._run(X)
        return np.array([e.mean for e in timeline(records, smoothed=self.propagate_smoothed)])

    def fit_transform(self, X, y=None):
        return self.fit(X).means_

    def score(self, X, y=None):
        """Mean per-step log predictive density of ``X`` under the filter."""
        check_is_fitted(self, "records_")
        X = self._check_X(X, reset=False)
        records, _, _ = self._run(X)
        total = 0.0
        for r in records:
            S = r.innovation_cov
            _, logdet = np.linalg.slogdet(2.0 * np.pi * S)
            total += -0.5 * (r.innovation @ np.linalg.solve(S, r.innovation) + logdet)
        return total / len(records)
