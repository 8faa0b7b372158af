"""Monte Carlo localization benchmark: scenario simulation, metrics, paired comparison."""

from __future__ import annotations

import collections
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from .exceptions import DimensionMismatch, FilterError, SingularCovariance
from .gaussian import GaussianDensity, cholesky, cholesky_solve
from .models import (
    CoordinatedTurn,
    NearlyConstantVelocity,
    Position,
    RangeBearing,
    RangeOnly,
    measure_all,
    sensor_model,
    wrap_angle,
)
from .unified import IterationPolicy, Linearizer, filter_zoo, run_filter, timeline

log = logging.getLogger(__name__)

#: a run whose NEES exceeds this at any step counts as diverged
DIVERGENCE_NEES = 1e4


def _default_truth():
    return GaussianDensity([10.0, -20.0, 0.0, 1.0], np.zeros((4, 4)))


def _default_filter_init():
    return GaussianDensity(np.zeros(4), np.diag([100.0, 100.0, 1.0, 1.0]))


@dataclass(frozen=True)
class Scenario:
    """Simulation setup.

    ``init_truth`` is the distribution of the true initial state.
    ``init_filter`` describes the filter initialization relative to the
    truth: the filter starts at ``x0 + init_filter.mean + d`` with
    ``d ~ N(0, init_filter.cov)`` and covariance ``init_filter.cov``.
    """

    n_steps: int = 50
    dt: float = 1.0
    dynamics: Union[NearlyConstantVelocity, CoordinatedTurn] = field(default_factory=NearlyConstantVelocity)
    sensors: Tuple[Union[RangeBearing, RangeOnly, Position], ...] = (RangeBearing(),)
    init_truth: GaussianDensity = field(default_factory=_default_truth)
    init_filter: GaussianDensity = field(default_factory=_default_filter_init)

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.sensors:
            raise ValueError("scenario needs at least one sensor")
        n = self.dynamics.state_dim
        if self.init_truth.dim != n or self.init_filter.dim != n:
            raise DimensionMismatch(f"initial densities must have dimension {n}")

    @property
    def state_dim(self):
        return self.dynamics.state_dim

    def models(self):
        """``(dynamics, measurement)`` NonlinearModels for the filters."""
        return self.dynamics.model(self.dt), sensor_model(self.sensors, self.state_dim)


class Simulation(NamedTuple):
    truth: np.ndarray
    measurements: np.ndarray
    initial_state: np.ndarray
    filter_init: GaussianDensity


def _sampler(cov):
    w, v = np.linalg.eigh(np.asarray(cov, dtype=float))
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate(scenario, seed):
    """Sample a true trajectory and its measurements (times ``1..n_steps``)."""
    rng = np.random.default_rng(seed)
    n = scenario.state_dim
    x = scenario.init_truth.mean + _sampler(scenario.init_truth.cov) @ rng.standard_normal(n)
    x0 = x.copy()
    offset = _sampler(scenario.init_filter.cov) @ rng.standard_normal(n)
    filter_init = GaussianDensity(x0 + scenario.init_filter.mean + offset, scenario.init_filter.cov)
    q_root = _sampler(scenario.dynamics.process_cov(scenario.dt))
    meas_cov = np.concatenate([np.diag(s.noise_cov()) for s in scenario.sensors])
    angular = np.concatenate([np.asarray(s.angular, dtype=bool) for s in scenario.sensors])
    truth, meas = [], []
    for _ in range(scenario.n_steps):
        x = scenario.dynamics.transition(x, scenario.dt) + q_root @ rng.standard_normal(n)
        y = measure_all(scenario.sensors, x) + np.sqrt(meas_cov) * rng.standard_normal(meas_cov.size)
        y = np.where(angular, wrap_angle(y), y)
        truth.append(x)
        meas.append(y)
    return Simulation(np.array(truth), np.array(meas), x0, filter_init)


class Metrics(NamedTuple):
    rmse_pos: float
    rmse_state: float
    nees: np.ndarray
    nis: np.ndarray


def _nees(err, cov):
    chol = cholesky(cov) if np.isfinite(cov.sum()) else None
    if chol is None:
        raise SingularCovariance("covariance is not positive definite")
    return float(err @ cholesky_solve(chol, err))


def metrics(truth, records, estimates=None, position_indices=(0, 1)):
    """RMSE, NEES and NIS of a filter run.

    ``estimates`` overrides the densities scored (default: the posteriors of
    ``records``); NIS always comes from the records' innovation statistics.
    """
    truth = np.atleast_2d(truth)
    if estimates is None:
        estimates = [r.posterior for r in records]
    if len(truth) != len(estimates) or len(records) != len(estimates):
        raise DimensionMismatch(f"{len(truth)} truth states vs {len(estimates)} estimates")
    if not records:
        return Metrics(0.0, 0.0, np.zeros(0), np.zeros(0))
    means = np.array([e.mean for e in estimates])
    err = truth - means
    pos = list(position_indices)
    rmse_pos = float(np.sqrt(np.mean(np.sum(err[:, pos] ** 2, axis=1))))
    rmse_state = float(np.sqrt(np.mean(np.sum(err**2, axis=1))))
    nees = np.array([_nees(e, est.cov) for e, est in zip(err, estimates)])
    nis = np.array([_nees(r.innovation, r.innovation_cov) for r in records])
    return Metrics(rmse_pos, rmse_state, nees, nis)


@dataclass(frozen=True)
class FilterSpec:
    name: str
    linearizer: Linearizer
    policy: IterationPolicy

    @classmethod
    def coerce(cls, item):
        if isinstance(item, FilterSpec):
            return item
        lin, policy = filter_zoo(item)
        return cls(item.upper(), lin, policy)


@dataclass
class RunOutcome:
    """One filter on one Monte Carlo run."""

    diverged: bool
    rmse_pos: float = np.nan
    rmse_state: float = np.nan
    nees: Optional[np.ndarray] = None
    nis: Optional[np.ndarray] = None
    iterations: Optional[np.ndarray] = None
    estimates: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None
    error: str = ""


def run_one(scenario, spec, sim, propagate_smoothed=False, keep_estimates=False):
    """Run ``spec`` on a simulated trajectory; errors and blow-ups become divergence."""
    dyn, meas = scenario.models()
    try:
        records = run_filter(sim.filter_init, sim.measurements, dyn, meas, spec.linearizer, spec.policy)
        est = timeline(records, smoothed=propagate_smoothed)
        m = metrics(sim.truth, records, est)
    except (FilterError, np.linalg.LinAlgError, FloatingPointError) as err:
        log.debug("%s diverged: %s", spec.name, err)
        return RunOutcome(True, error=f"{type(err).__name__}: {err}")
    iters = np.array([r.iterations_used for r in records])
    diverged = not (np.all(np.isfinite(m.nees)) and np.all(m.nees <= DIVERGENCE_NEES))
    return RunOutcome(
        diverged,
        m.rmse_pos,
        m.rmse_state,
        m.nees,
        m.nis,
        iters,
        np.array([e.mean for e in est]) if keep_estimates else None,
        np.array([np.diag(e.cov) for e in est]) if keep_estimates else None,
        "NEES above divergence threshold" if diverged else "",
    )


def _run_seed(args):
    scenario, specs, seed, propagate_smoothed, keep_estimates = args
    sim = simulate(scenario, seed)
    return sim, [run_one(scenario, s, sim, propagate_smoothed, keep_estimates) for s in specs]


@dataclass
class FilterResult:
    """Per-run outcomes of one filter with aggregate statistics."""

    spec: FilterSpec
    runs: list

    @property
    def name(self):
        return self.spec.name

    @property
    def ok(self):
        return [r for r in self.runs if not r.diverged]

    @property
    def n_diverged(self):
        return sum(r.diverged for r in self.runs)

    @property
    def divergence_rate(self):
        return self.n_diverged / len(self.runs)

    @property
    def rmse_pos(self):
        """Per-run position RMSE, ``nan`` for diverged runs."""
        return np.array([np.nan if r.diverged else r.rmse_pos for r in self.runs])

    def _stat(self, values):
        values = np.asarray(values, dtype=float)
        return float(values.mean()) if values.size else np.nan

    @property
    def rmse_pos_mean(self):
        return self._stat([r.rmse_pos for r in self.ok])

    @property
    def rmse_pos_se(self):
        vals = np.array([r.rmse_pos for r in self.ok])
        if vals.size < 2:
            return np.nan
        return float(vals.std(ddof=1) / np.sqrt(vals.size))

    @property
    def rmse_state_mean(self):
        return self._stat([r.rmse_state for r in self.ok])

    @property
    def nees_mean(self):
        """Mean over non-diverged runs of the time-averaged NEES."""
        return self._stat([r.nees.mean() for r in self.ok])

    def nees_by_time(self, n_steps=None):
        """Mean NEES at each time over non-diverged runs (``nan`` if there are none)."""
        if not self.ok:
            return np.full(0 if n_steps is None else n_steps, np.nan)
        return np.mean([r.nees for r in self.ok], axis=0)

    @property
    def nis_mean(self):
        return self._stat([r.nis.mean() for r in self.ok])

    @property
    def mean_iterations(self):
        its = [r.iterations for r in self.ok]
        return float(np.concatenate(its).mean()) if its else np.nan

    @property
    def iteration_histogram(self):
        counts = collections.Counter()
        for r in self.ok:
            counts.update(int(i) for i in r.iterations)
        return dict(sorted(counts.items()))


@dataclass
class BenchmarkResult:
    scenario: Scenario
    base_seed: int
    n_mc: int
    filters: list
    simulations: list = field(default_factory=list, repr=False)

    def __getitem__(self, name):
        for f in self.filters:
            if f.name == name:
                return f
        raise KeyError(name)


def run_benchmark(scenario, filters, n_mc, base_seed=0, propagate_smoothed=False, jobs=1, keep_estimates=False):
    """Run every filter on ``n_mc`` paired simulations.

    Run ``r`` is simulated with seed ``base_seed + r`` and every filter sees
    the same truth and measurements. Per-run failures count as divergence.
    """
    if n_mc < 1:
        raise ValueError(f"n_mc must be >= 1, got {n_mc}")
    specs = [FilterSpec.coerce(f) for f in filters]
    tasks = [(scenario, specs, base_seed + r, propagate_smoothed, keep_estimates) for r in range(n_mc)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_seed, tasks, chunksize=max(1, n_mc // (4 * jobs))))
    else:
        outputs = [_run_seed(t) for t in tasks]
    sims = [o[0] for o in outputs]
    results = [FilterResult(spec, [o[1][i] for o in outputs]) for i, spec in enumerate(specs)]
    return BenchmarkResult(scenario, base_seed, n_mc, results, sims)


class PairedTest(NamedTuple):
    mean_difference: float
    p_violation: float
    p_improvement: float
    n_pairs: int


def paired_comparison(better, worse):
    """Paired one-sided t-tests on position RMSE of runs where neither filter diverged.

    ``p_violation`` tests ``H1: better is worse``; ``p_improvement`` tests
    ``H1: better is strictly better``. Identical runs give ``p = 1`` for both.
    """
    import scipy.stats

    a, b = better.rmse_pos, worse.rmse_pos
    keep = np.isfinite(a) & np.isfinite(b)
    d = a[keep] - b[keep]
    if d.size < 2 or np.allclose(d, 0.0, atol=1e-12):
        return PairedTest(float(d.mean()) if d.size else np.nan, 1.0, 1.0, int(d.size))
    p_viol = scipy.stats.ttest_1samp(d, 0.0, alternative="greater").pvalue
    p_impr = scipy.stats.ttest_1samp(d, 0.0, alternative="less").pvalue
    return PairedTest(float(d.mean()), float(p_viol), float(p_impr), int(d.size))
