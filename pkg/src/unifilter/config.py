"""Experiment configuration files (YAML).

Unknown keys are errors. Every error names the offending field by its
dotted path, e.g. ``scenario.sensors[0].sigma_r``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import List

import yaml

from .bench import FilterSpec, Scenario
from .exceptions import ConfigError, FilterError
from .gaussian import GaussianDensity
from .linearize import CubatureSpherical, MonteCarlo, Unscented
from .models import CoordinatedTurn, NearlyConstantVelocity, Position, RangeBearing, RangeOnly
from .unified import FilterClass, IterationPolicy, Linearizer, filter_zoo


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 only reads "1.0e-8" as a float; accept "1e-8" too
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+][0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


@dataclass
class ExperimentConfig:
    scenario: Scenario
    filters: List[FilterSpec]
    n_mc: int
    base_seed: int = 0
    output_dir: str = "results"
    propagate_smoothed: bool = False


class _Node:
    """A mapping being consumed key by key, remembering its dotted path."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}", path)
        self.data = dict(data)
        self.path = path

    def _sub(self, key):
        return f"{self.path}.{key}" if self.path else key

    def take(self, key, convert, default=...):
        path = self._sub(key)
        if key not in self.data:
            if default is ...:
                raise ConfigError(f"{path}: required field is missing", path)
            return default
        value = self.data.pop(key)
        try:
            return convert(value, path)
        except ConfigError:
            raise
        except (TypeError, ValueError, FilterError) as err:
            raise ConfigError(f"{path}: {err}", path) from None

    def done(self):
        if self.data:
            key = sorted(self.data, key=str)[0]
            raise ConfigError(f"{self._sub(key)}: unknown key", self._sub(key))


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def _float(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _bool(v, path):
    if not isinstance(v, bool):
        raise ValueError(f"expected true/false, got {v!r}")
    return v


def _str(v, path):
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


def _vector(v, path):
    if not isinstance(v, list):
        raise ValueError(f"expected a list of numbers, got {v!r}")
    return [_float(x, path) for x in v]


def _matrix(v, path):
    if not isinstance(v, list) or not all(isinstance(row, list) for row in v):
        raise ValueError(f"expected a list of rows, got {v!r}")
    return [_vector(row, path) for row in v]


def _density(v, path):
    node = _Node(v, path)
    mean = node.take("mean", _vector)
    cov = node.take("cov", _matrix)
    node.done()
    return GaussianDensity(mean, cov)


def _dynamics(v, path):
    node = _Node(v, path)
    kind = node.take("kind", _str)
    if kind == "ncv":
        dyn = NearlyConstantVelocity(node.take("q", _float, 0.1))
    elif kind == "coordinated_turn":
        dyn = CoordinatedTurn(node.take("q", _float, 0.1), node.take("q_turn", _float, 1e-4))
    else:
        raise ConfigError(f"{path}.kind: unknown dynamics {kind!r} (ncv, coordinated_turn)", f"{path}.kind")
    node.done()
    if any(value < 0 for value in vars(dyn).values()):
        raise ConfigError(f"{path}: noise intensities must be >= 0", path)
    return dyn


def _position(v, path):
    vec = _vector(v, path)
    if len(vec) != 2:
        raise ValueError("sensor position must have 2 entries")
    return tuple(vec)


def _sensor(v, path):
    node = _Node(v, path)
    kind = node.take("kind", _str)
    if kind == "range_bearing":
        sensor = RangeBearing(
            node.take("position", _position, (0.0, 0.0)),
            node.take("sigma_r", _float, 1.0),
            node.take("sigma_theta", _float, 0.1),
        )
    elif kind == "range_only":
        sensor = RangeOnly(node.take("position", _position, (0.0, 0.0)), node.take("sigma_r", _float, 1.0))
    elif kind == "position":
        sensor = Position(node.take("sigma", _float, 1.0))
    else:
        raise ConfigError(
            f"{path}.kind: unknown sensor {kind!r} (range_bearing, range_only, position)", f"{path}.kind"
        )
    node.done()
    return sensor


def _list(item):
    def convert(v, path):
        if not isinstance(v, list):
            raise ValueError(f"expected a list, got {v!r}")
        return [item(x, f"{path}[{i}]") for i, x in enumerate(v)]

    return convert


def _scenario(v, path):
    node = _Node(v, path)
    defaults = Scenario()
    sc = Scenario(
        n_steps=node.take("n_steps", _int, defaults.n_steps),
        dt=node.take("dt", _float, defaults.dt),
        dynamics=node.take("dynamics", _dynamics, defaults.dynamics),
        sensors=tuple(node.take("sensors", _list(_sensor), list(defaults.sensors))),
        init_truth=node.take("init_truth", _density, defaults.init_truth),
        init_filter=node.take("init_filter", _density, defaults.init_filter),
    )
    node.done()
    return sc


def _rule(v, path):
    node = _Node(v, path)
    kind = node.take("kind", _str)
    if kind == "unscented":
        kappa = node.take("kappa", lambda x, p: None if x is None else _float(x, p), None)
        rule = Unscented(node.take("alpha", _float, 1.0), node.take("beta", _float, 0.0), kappa)
    elif kind == "cubature":
        rule = CubatureSpherical()
    elif kind == "monte_carlo":
        rule = MonteCarlo(
            node.take("sample_count", _int, 1000),
            node.take("seed", _int, 0),
            node.take("moment_match", _bool, True),
        )
    else:
        raise ConfigError(f"{path}.kind: unknown rule {kind!r} (unscented, cubature, monte_carlo)", f"{path}.kind")
    node.done()
    return rule


def _linearizer(v, path):
    node = _Node(v, path)
    kind = node.take("kind", _str)
    rule = node.take("rule", _rule, None)
    node.done()
    if kind == "statistical":
        return Linearizer.statistical(rule)
    return Linearizer(kind, rule)


def _filter_class(v, path):
    name = _str(v, path)
    try:
        return FilterClass(name)
    except ValueError:
        known = ", ".join(c.value for c in FilterClass)
        raise ValueError(f"unknown filter class {name!r} ({known})") from None


def _policy(v, path):
    node = _Node(v, path)
    policy = IterationPolicy(
        node.take("class", _filter_class),
        node.take("max_iters", _int, 10),
        node.take("tol", _float, 1e-8),
        node.take("damping", _float, 1.0),
    )
    node.done()
    return policy


_NAME = re.compile(r"^[A-Za-z0-9_.+-]+$")


def _name(v, path):
    name = _str(v, path)
    if not _NAME.match(name):
        raise ValueError(f"filter name {name!r} may only use letters, digits and _.+-")
    return name


def _filter(v, path):
    if isinstance(v, str):
        try:
            lin, policy = filter_zoo(v)
        except FilterError as err:
            raise ConfigError(f"{path}: {err}", path) from None
        return FilterSpec(v.upper(), lin, policy)
    node = _Node(v, path)
    name = node.take("name", _name)
    spec = FilterSpec(name, node.take("linearizer", _linearizer), node.take("policy", _policy))
    node.done()
    return spec


def _n_mc(v, path):
    n = _int(v, path)
    if n < 1:
        raise ValueError("must be >= 1")
    return n


def parse_config(data):
    """Build an :class:`ExperimentConfig` from parsed YAML data."""
    node = _Node(data, "")
    cfg = ExperimentConfig(
        scenario=node.take("scenario", _scenario),
        filters=node.take("filters", _list(_filter)),
        n_mc=node.take("n_mc", _n_mc),
        base_seed=node.take("base_seed", _int, 0),
        output_dir=node.take("output_dir", _str, "results"),
        propagate_smoothed=node.take("propagate_smoothed", _bool, False),
    )
    node.done()
    if not cfg.filters:
        raise ConfigError("filters: at least one filter is required", "filters")
    names = [f.name for f in cfg.filters]
    if len(set(names)) != len(names):
        raise ConfigError("filters: filter names must be unique", "filters")
    return cfg


def loads_config(text, source="config"):
    """Parse and validate YAML text."""
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as err:
        raise ConfigError(f"{source}: invalid YAML: {err}") from None
    return parse_config(data)


def load_config(path):
    """Read and validate a YAML experiment file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config ({err.strerror})") from None
    return loads_config(text, str(path))


def _density_dict(d):
    return {"mean": d.mean.tolist(), "cov": d.cov.tolist()}


def _rule_dict(rule):
    if isinstance(rule, Unscented):
        return {"kind": "unscented", "alpha": rule.alpha, "beta": rule.beta, "kappa": rule.kappa}
    if isinstance(rule, CubatureSpherical):
        return {"kind": "cubature"}
    return {"kind": "monte_carlo", "sample_count": rule.sample_count, "seed": rule.seed, "moment_match": rule.moment_match}


def _sensor_dict(s):
    if isinstance(s, RangeBearing):
        return {"kind": "range_bearing", "position": list(s.position), "sigma_r": s.sigma_r, "sigma_theta": s.sigma_theta}
    if isinstance(s, RangeOnly):
        return {"kind": "range_only", "position": list(s.position), "sigma_r": s.sigma_r}
    return {"kind": "position", "sigma": s.sigma}


def _filter_dict(spec):
    lin = {"kind": spec.linearizer.kind}
    if spec.linearizer.rule is not None:
        lin["rule"] = _rule_dict(spec.linearizer.rule)
    p = spec.policy
    return {
        "name": spec.name,
        "linearizer": lin,
        "policy": {"class": p.filter_class.value, "max_iters": p.max_iters, "tol": p.tol, "damping": p.damping},
    }


def config_to_dict(cfg):
    """Fully explicit tree of ``cfg``; ``parse_config`` inverts it exactly."""
    sc = cfg.scenario
    if isinstance(sc.dynamics, NearlyConstantVelocity):
        dyn = {"kind": "ncv", "q": sc.dynamics.q}
    else:
        dyn = {"kind": "coordinated_turn", "q": sc.dynamics.q, "q_turn": sc.dynamics.q_turn}
    return {
        "scenario": {
            "n_steps": sc.n_steps,
            "dt": sc.dt,
            "dynamics": dyn,
            "sensors": [_sensor_dict(s) for s in sc.sensors],
            "init_truth": _density_dict(sc.init_truth),
            "init_filter": _density_dict(sc.init_filter),
        },
        "filters": [_filter_dict(f) for f in cfg.filters],
        "n_mc": cfg.n_mc,
        "base_seed": cfg.base_seed,
        "output_dir": cfg.output_dir,
        "propagate_smoothed": cfg.propagate_smoothed,
    }


def dump_config(cfg):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
