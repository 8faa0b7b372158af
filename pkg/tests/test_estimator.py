import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from unifilter import FilterClass, IterationPolicy, Linearizer, UnifiedFilter, filter_zoo, run_filter, timeline
from unifilter.bench import Scenario, simulate


@pytest.fixture(scope="module")
def problem():
    sc = Scenario(n_steps=15)
    sim = simulate(sc, 2)
    dyn, meas = sc.models()
    return dyn, meas, sim


def make(problem, **kw):
    dyn, meas, sim = problem
    return UnifiedFilter(dyn, meas, sim.filter_init.mean, sim.filter_init.cov, **kw)


def test_matches_run_filter(problem):
    dyn, meas, sim = problem
    est = make(problem, method="IPLF").fit(sim.measurements)
    recs = run_filter(sim.filter_init, sim.measurements, dyn, meas, *filter_zoo("IPLF"))
    np.testing.assert_array_equal(est.means_, [r.posterior.mean for r in recs])
    np.testing.assert_array_equal(est.covariances_, [r.posterior.cov for r in recs])
    np.testing.assert_array_equal(est.iterations_, [r.iterations_used for r in recs])
    assert est.n_features_in_ == 2
    np.testing.assert_array_equal(est.transform(sim.measurements), est.means_)
    np.testing.assert_array_equal(make(problem, method="IPLF").fit_transform(sim.measurements), est.means_)


def test_params_and_clone(problem):
    est = make(problem, method="DIEKF", propagate_smoothed=True)
    params = est.get_params()
    assert params["method"] == "DIEKF" and params["propagate_smoothed"] is True
    other = clone(est)
    assert other.get_params()["method"] == "DIEKF"
    other.set_params(method="EKF")
    assert est.method == "DIEKF"


def test_overrides(problem):
    _, _, sim = problem
    policy = IterationPolicy(FilterClass.ITERATED, max_iters=3, tol=0.0)
    est = make(problem, method="EKF", linearizer=Linearizer.statistical(), policy=policy).fit(sim.measurements)
    assert est.linearizer_.label == "Statistical(Unscented)"
    assert np.all(est.iterations_ == 3)


def test_propagate_smoothed(problem):
    dyn, meas, sim = problem
    est = make(problem, method="DIEKF", propagate_smoothed=True).fit(sim.measurements)
    recs = run_filter(sim.filter_init, sim.measurements, dyn, meas, *filter_zoo("DIEKF"))
    np.testing.assert_array_equal(est.means_, [d.mean for d in timeline(recs)])


def test_score(problem):
    _, _, sim = problem
    est = make(problem, method="EKF").fit(sim.measurements)
    s = est.score(sim.measurements)
    r = est.records_[0]
    S, v = r.innovation_cov, r.innovation
    first = -0.5 * (v @ np.linalg.solve(S, v) + np.log(np.linalg.det(2 * np.pi * S)))
    assert np.isfinite(s)
    assert s != first
    # a wildly wrong sequence scores worse
    assert est.score(sim.measurements + [50.0, 0.0]) < s


def test_validation(problem):
    _, _, sim = problem
    with pytest.raises(NotFittedError):
        make(problem).transform(sim.measurements)
    with pytest.raises(ValueError):
        make(problem).fit(sim.measurements[:, :1])
    with pytest.raises(ValueError):
        make(problem).fit(np.full((3, 2), np.nan))
    with pytest.raises(ValueError):
        UnifiedFilter().fit(sim.measurements)
    with pytest.raises(ValueError):
        make(problem, linearizer="EKF").fit(sim.measurements)
    with pytest.raises(KeyError):
        make(problem, method="PF").fit(sim.measurements)
