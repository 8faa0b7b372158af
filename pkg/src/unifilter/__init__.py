"""Unified linearization-based Gaussian filtering.

One general filter step whose configuration, a :class:`Linearizer` and an
:class:`IterationPolicy`, recovers the standard, iterated and dynamically
iterated Kalman filter families.
"""

__version__ = "0.1.0"

from .exceptions import *  # noqa: F401,F403
from .gaussian import (
    AffineModel,
    GaussianDensity,
    NonlinearModel,
    WeightedSampleSet,
    make_gaussian,
    project_psd,
    safe_cholesky,
)
from .kalman import measurement_update, rts_smooth, smoothing_step, time_update
from .linearize import (
    CubatureSpherical,
    MonteCarlo,
    Unscented,
    finite_diff_jacobian,
    linearize_analytical,
    linearize_statistical,
    quadrature_points,
    statistical_moments,
)
from .unified import (
    ZOO_NAMES,
    FilterClass,
    IterationPolicy,
    Linearizer,
    StepRecord,
    filter_zoo,
    general_step,
    linearize_dynamics,
    linearize_measurement,
    run_filter,
    timeline,
)
from .bench import FilterSpec, Scenario, metrics, paired_comparison, run_benchmark, simulate
from .estimator import UnifiedFilter
