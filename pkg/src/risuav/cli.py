"""Command line front end: single runs, sweeps, scheme and baseline comparisons.

Artifacts are written to a scratch directory next to ``--out`` and moved in
only once everything succeeded, so a failed command leaves nothing behind.
Failures print one JSON object on stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import plots
from .baseline_af import AfModel, run_baseline
from .orchestrator import (TRACE_SCHEMA_VERSION, complexity_estimate, model_evaluate,
                           run_algorithm2)
from .rates import Allocation, SolutionState, evaluate
from .scenario import (ConfigError, Trajectory, config_from_dict, config_to_dict,
                       default_paper_scenario, initial_trajectory, load_config)

SCHEMA_VERSION = 1
UNITS = {
    "trajectory": "m", "phases": "rad", "assoc": "1", "power": "W",
    "zeta": "bit/s/Hz", "gamma": "bit/s/Hz/W",
}
# sweep axis -> (config field, label, integer valued)
AXES = {
    "H": ("altitude", "UAV altitude H (m)", False),
    "alpha": ("pathloss", "path-loss exponent", False),
    "Pk": ("max_power", "max user power P_k (W)", False),
    "M": ("ris_elements", "RIS elements M", True),
    "vmax": ("v_max", "max UAV speed (m/s)", False),
}
SWEEP_FIELDS = ["value", "zeta_bit_per_s_hz", "gamma_bit_per_s_hz_w",
                "gamma_baseline_bit_per_s_hz_w", "iterations", "status", "error"]


class CliError(Exception):
    def __init__(self, kind, message, code=1):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, 2)


# --- solutions on disk -------------------------------------------------------

def solution_to_dict(cfg, state, link="ris", scheme=1, seed=0, trace=None):
    A = state.allocation
    doc = {
        "schema_version": SCHEMA_VERSION,
        "trace_schema_version": TRACE_SCHEMA_VERSION,
        "link": link,
        "scheme": scheme,
        "seed": seed,
        "units": UNITS,
        "config": config_to_dict(cfg),
        "trajectory": state.trajectory.points.tolist(),
        "phases": np.asarray(state.phases).tolist(),
        "assoc": A.assoc.tolist(),
        "power": A.power.tolist(),
        "zeta": state.zeta,
        "gamma": state.gamma,
    }
    if trace is not None:
        doc["iterations"] = len(trace.rows) - 1
        doc["complexity"] = complexity_estimate(cfg, scheme, trace)
    return doc


def solution_from_dict(doc):
    """Returns ``(cfg, state)``; raises ConfigError on a malformed document."""
    try:
        if doc["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {doc['schema_version']!r}")
        cfg = config_from_dict(doc["config"])
        state = SolutionState(Allocation(doc["assoc"], doc["power"]),
                              Trajectory(doc["trajectory"]), np.asarray(doc["phases"], float),
                              float(doc["zeta"]), float(doc["gamma"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad solution document: {exc}") from exc
    return cfg, state


def reevaluate(doc):
    """Recompute (zeta, gamma) of a stored solution from scratch."""
    cfg, state = solution_from_dict(doc)
    if doc.get("link", "ris") == "af":
        A, P = state.allocation.assoc, state.allocation.power
        return model_evaluate(cfg, AfModel(), A, P, state.trajectory, state.phases)
    return evaluate(cfg, state)


def load_solution(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --- helpers -----------------------------------------------------------------

def _scheme(value):
    v = str(value).strip().upper()
    if v in ("1", "I"):
        return 1
    if v in ("2", "II"):
        return 2
    raise argparse.ArgumentTypeError("scheme must be 1 or 2 (or I / II)")


def _values(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("no values given")
    if not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("values must be finite")
    return vals


def _config(path):
    if path is None:
        return default_paper_scenario()
    try:
        return load_config(path)
    except OSError as exc:
        raise CliError("config", f"cannot read {path}: {exc.strerror}", 2)
    except ConfigError as exc:
        raise CliError("config", str(exc), 2)


class _Staging:
    """Scratch directory whose files are moved into ``out`` on commit."""

    def __init__(self, out):
        self.out = os.path.abspath(out)
        parent = os.path.dirname(self.out)
        os.makedirs(parent, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=".risuav-", dir=parent)

    def path(self, name):
        return os.path.join(self.tmp, name)

    def commit(self):
        os.makedirs(self.out, exist_ok=True)
        for name in sorted(os.listdir(self.tmp)):
            os.replace(os.path.join(self.tmp, name), os.path.join(self.out, name))
        os.rmdir(self.tmp)

    def discard(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _optimize(cfg, link, scheme):
    if link == "af":
        return run_baseline(cfg)
    return run_algorithm2(cfg, scheme)


def _write_run(stage, cfg, state, trace, link, scheme, seed, label):
    trace.write_csv(stage.path("trace.csv"))
    with open(stage.path("solution.json"), "w", encoding="utf-8") as fh:
        json.dump(solution_to_dict(cfg, state, link, scheme, seed, trace), fh, indent=1)
    plots.plot_trajectory(cfg, initial_trajectory(cfg), state, stage.path("trajectory.svg"),
                          seed, title=label)
    plots.plot_convergence({label: trace.gammas}, stage.path("convergence.svg"), seed)


def _label(link, scheme):
    return "AF relay" if link == "af" else f"RIS scheme {'I' if scheme == 1 else 'II'}"


# --- commands ----------------------------------------------------------------

def cmd_run(args, link="ris"):
    cfg = _config(args.config)
    state, trace = _optimize(cfg, link, args.scheme)
    stage = _Staging(args.out)
    try:
        _write_run(stage, cfg, state, trace, link, args.scheme, args.seed,
                   _label(link, args.scheme))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(json.dumps({"out": stage.out, "zeta": state.zeta, "gamma": state.gamma,
                      "iterations": len(trace.rows) - 1}))
    return 0


def cmd_baseline(args):
    return cmd_run(args, link="af")


def cmd_compare(args):
    cfg = _config(args.config)
    runs = [("ris", 1), ("ris", 2)]
    if args.baseline == "af":
        runs.append(("af", 1))
    results = [(link, sch) + _optimize(cfg, link, sch) for link, sch in runs]
    stage = _Staging(args.out)
    try:
        with open(stage.path("compare.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["link", "scheme", "zeta_bit_per_s_hz", "gamma_bit_per_s_hz_w",
                        "iterations"])
            for link, sch, state, trace in results:
                w.writerow([link, sch, repr(state.zeta), repr(state.gamma), len(trace.rows) - 1])
        for link, sch, state, trace in results:
            tag = "af" if link == "af" else f"scheme{sch}"
            trace.write_csv(stage.path(f"trace_{tag}.csv"))
            with open(stage.path(f"solution_{tag}.json"), "w", encoding="utf-8") as fh:
                json.dump(solution_to_dict(cfg, state, link, sch, args.seed, trace), fh, indent=1)
            plots.plot_trajectory(cfg, initial_trajectory(cfg), state,
                                  stage.path(f"trajectory_{tag}.svg"), args.seed,
                                  title=_label(link, sch))
        plots.plot_convergence({_label(link, sch): trace.gammas
                                for link, sch, _, trace in results},
                               stage.path("convergence.svg"), args.seed)
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(json.dumps({_label(link, sch): state.gamma for link, sch, state, _ in results}))
    return 0


def sweep_point(cfg_doc, axis, value, scheme, baseline):
    """One independent sweep point; never raises, failures go in the row."""
    row = {"value": value, "zeta_bit_per_s_hz": math.nan, "gamma_bit_per_s_hz_w": math.nan,
           "gamma_baseline_bit_per_s_hz_w": math.nan if baseline == "af" else "",
           "iterations": "", "status": "ok", "error": ""}
    try:
        name, _, integer = AXES[axis]
        if integer:
            if value != int(value):
                raise ConfigError(f"{axis} must be an integer, got {value}")
            value = int(value)
        doc = dict(cfg_doc)
        doc = config_to_dict(config_from_dict(doc).replace(**{name: value}))
        cfg = config_from_dict(doc)
        state, trace = run_algorithm2(cfg, scheme)
        row.update(zeta_bit_per_s_hz=state.zeta, gamma_bit_per_s_hz_w=state.gamma,
                   iterations=len(trace.rows) - 1)
        if baseline == "af":
            row["gamma_baseline_bit_per_s_hz_w"] = run_baseline(cfg)[0].gamma
    except Exception as exc:  # recorded, sweep goes on
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def run_sweep(cfg, axis, values, scheme=1, baseline="none", jobs=1):
    doc = config_to_dict(cfg)
    if jobs > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(sweep_point, doc, axis, v, scheme, baseline) for v in values]
            return [f.result() for f in futs]
    return [sweep_point(doc, axis, v, scheme, baseline) for v in values]


def cmd_sweep(args):
    cfg = _config(args.config)
    if args.axis is None or args.values is None:
        raise CliError("usage", "sweep needs --axis and --values", 2)
    rows = run_sweep(cfg, args.axis, args.values, args.scheme, args.baseline, args.jobs)
    stage = _Staging(args.out)
    try:
        with open(stage.path("sweep.csv"), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        vals = [r["value"] for r in rows]
        series = {_label("ris", args.scheme): [r["gamma_bit_per_s_hz_w"] for r in rows]}
        if args.baseline == "af":
            series["AF relay"] = [r["gamma_baseline_bit_per_s_hz_w"] for r in rows]
        plots.plot_sweep(AXES[args.axis][1], vals, series, stage.path(f"sweep_{args.axis}.svg"),
                         args.seed)
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    failed = sum(r["status"] != "ok" for r in rows)
    print(json.dumps({"out": stage.out, "points": len(rows), "failed": failed}))
    return 0


def build_parser():
    p = _Parser(prog="risuav", description="Secrecy energy efficiency of a UAV-mounted RIS link")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML scenario (default: built-in reference scenario)")
    common.add_argument("--scheme", type=_scheme, default=1, help="1 (align then move) or 2 (joint)")
    common.add_argument("--baseline", choices=["none", "af"], default="none")
    common.add_argument("--seed", type=int, default=0, help="salt for deterministic SVG ids")
    common.add_argument("--out", default="out", help="output directory")
    sub.add_parser("run", parents=[common], help="one optimisation run")
    sub.add_parser("baseline", parents=[common], help="AF relay run")
    sub.add_parser("compare", parents=[common], help="scheme I vs II (and AF)")
    sw = sub.add_parser("sweep", parents=[common], help="one run per parameter value")
    sw.add_argument("--axis", choices=sorted(AXES))
    sw.add_argument("--values", type=_values, help="comma separated, e.g. 50,100,150")
    sw.add_argument("--jobs", type=int, default=1)
    return p


COMMANDS = {"run": cmd_run, "baseline": cmd_baseline, "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise CliError("usage", "--jobs must be >= 1", 2)
        return COMMANDS[args.command](args)
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc)}
        code = exc.code
    except Exception as exc:
        err = {"error": type(exc).__name__, "message": str(exc),
               "where": traceback.extract_tb(exc.__traceback__)[-1].name}
        code = 1
    print(json.dumps(err), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
