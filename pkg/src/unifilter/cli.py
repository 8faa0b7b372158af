"""Command-line interface: ``unifilter run | zoo | plot-data``.

Exit codes: 0 success, 2 configuration or input error, 3 when every run of
some filter diverged (outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import run_benchmark
from .config import config_to_dict, load_config
from .exceptions import ConfigError, MissingResults
from .unified import ZOO_NAMES, filter_zoo

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

SUMMARY_COLUMNS = (
    "filter",
    "linearizer",
    "class",
    "n_mc",
    "rmse_pos_mean",
    "rmse_pos_se",
    "nees_mean",
    "divergence_rate",
    "mean_iterations",
)


def fmt(value):
    """17 significant digits: lossless for float64."""
    return format(float(value), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _summary_rows(result):
    for f in result.filters:
        yield [
            f.name,
            f.spec.linearizer.label,
            f.spec.policy.filter_class.value,
            str(result.n_mc),
            fmt(f.rmse_pos_mean),
            fmt(f.rmse_pos_se),
            fmt(f.nees_mean),
            fmt(f.divergence_rate),
            fmt(f.mean_iterations),
        ]


def _write_traces(out, result):
    n = result.scenario.state_dim
    header = ["k"] + [f"truth_{i}" for i in range(n)] + [f"mean_{i}" for i in range(n)] + [f"var_{i}" for i in range(n)]
    for f in result.filters:
        for r, (run, sim) in enumerate(zip(f.runs, result.simulations)):
            if run.diverged:
                continue
            rows = [
                [str(k + 1)] + [fmt(v) for v in np.concatenate([sim.truth[k], run.estimates[k], run.variances[k]])]
                for k in range(len(sim.truth))
            ]
            _write_csv(out / f"trace_{f.name}_run{r}.csv", header, rows)


def cmd_run(config_path, output_dir=None, traces=False, propagate_smoothed=False, jobs=1):
    cfg = load_config(config_path)
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"output_dir: cannot create {out} ({err.strerror})", "output_dir") from None
    smoothed = propagate_smoothed or cfg.propagate_smoothed
    result = run_benchmark(
        cfg.scenario,
        cfg.filters,
        cfg.n_mc,
        base_seed=cfg.base_seed,
        propagate_smoothed=smoothed,
        jobs=jobs,
        keep_estimates=traces,
    )

    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, _summary_rows(result))
    nees = [f.nees_by_time(cfg.scenario.n_steps) for f in result.filters]
    _write_csv(
        out / "nees_time.csv",
        ["k"] + [f.name for f in result.filters],
        [[str(k + 1)] + [fmt(col[k]) for col in nees] for k in range(cfg.scenario.n_steps)],
    )
    if traces:
        _write_traces(out, result)
    meta = {
        "tool": "unifilter",
        "version": __version__,
        "config_path": str(config_path),
        "config": config_to_dict(cfg),
        "propagate_smoothed": smoothed,
        "seeds": [cfg.base_seed + r for r in range(cfg.n_mc)],
        "jobs": jobs,
        "traces": traces,
        "numpy_version": np.__version__,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    status = EXIT_OK
    for f in result.filters:
        if f.n_diverged == len(f.runs):
            print(f"error: every run of filter {f.name} diverged", file=sys.stderr)
            status = EXIT_DIVERGED
    return status


def cmd_zoo(stream=None):
    stream = sys.stdout if stream is None else stream
    rows = [("name", "linearizer", "class")]
    for name in ZOO_NAMES:
        lin, policy = filter_zoo(name)
        rows.append((name, lin.label, policy.filter_class.value))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip(), file=stream)
    return EXIT_OK


def _read_csv(path):
    if not path.is_file():
        raise MissingResults(f"{path}: not found")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise MissingResults(f"{path}: no data rows")
    return rows[0], rows[1:]


def _write_dat(path, header, rows):
    lines = ["# " + " ".join(header)] + [" ".join(r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def cmd_plotdata(results_dir):
    """Convert run outputs to whitespace-delimited ``.dat`` files; numbers are copied verbatim."""
    d = Path(results_dir)
    header, rows = _read_csv(d / "summary.csv")
    if tuple(header) != SUMMARY_COLUMNS:
        raise MissingResults(f"{d / 'summary.csv'}: unexpected columns {header}")
    col = {name: i for i, name in enumerate(header)}
    keep = ("rmse_pos_mean", "rmse_pos_se", "nees_mean", "divergence_rate")
    _write_dat(
        d / "rmse_vs_filter.dat",
        ("index", "filter") + keep,
        [[str(i), r[col["filter"]]] + [r[col[c]] for c in keep] for i, r in enumerate(rows)],
    )
    header, rows = _read_csv(d / "nees_time.csv")
    _write_dat(d / "nees_vs_time.dat", header, rows)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="unifilter", description="Linearization-based Gaussian filter experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment from a YAML config")
    run.add_argument("config", help="experiment config file")
    run.add_argument("-o", "--output-dir", help="override the config's output_dir")
    run.add_argument("--traces", action="store_true", help="write per-run trace CSVs")
    run.add_argument("--propagate-smoothed", action="store_true", help="score lag-one smoothed estimates")
    run.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes (default 1)")

    sub.add_parser("zoo", help="list the named filter configurations")

    plot = sub.add_parser("plot-data", help="write .dat plot files from a results directory")
    plot.add_argument("dir", help="directory holding summary.csv")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1", "--jobs")
            return cmd_run(args.config, args.output_dir, args.traces, args.propagate_smoothed, args.jobs)
        if args.command == "zoo":
            return cmd_zoo()
        return cmd_plotdata(args.dir)
    except ConfigError as err:
        where = f"{args.config}: " if args.command == "run" else ""
        print(f"config error: {where}{err}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingResults as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
