"""Command-line front end.

Usage::

    ellipflow {simulate,verify,classify,sweep,lyapunov,mass} --config run.json --out results/

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure
(step-size underflow, undetermined classification, Lyapunov run cut short).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import dynamics, plotting
from .config import RunConfig, parse_config
from .errors import BlowupDuringLyapunov, EllipflowError, InfiniteMassError, SchemaError, ValidationError
from .fields import physical_mass, profile_for, total_mass
from .integrator import TerminationKind, dense_eval, integrate
from .model import System
from .verify import Method, adjudicate, verify_trajectory

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

SUBCOMMANDS = ("simulate", "verify", "classify", "sweep", "lyapunov", "mass")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def write_json(path, payload):
    text = json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")
    return path


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_csv(path, config: RunConfig, header, rows):
    """CSV with a ``# config:`` provenance line, a header row and LF line endings."""
    lines = ["# config: " + json.dumps(_clean(config.to_dict()), sort_keys=True), ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def _provenance(config):
    return {"config": config.to_dict()}


def cmd_simulate(config: RunConfig, out: Path):
    spec = config.spec
    traj = integrate(spec, config.integration)
    n = spec.dimension
    header = ["t"] + [f"a_{i + 1}" for i in range(n)] + [f"adot_{i + 1}" for i in range(n)]
    rows = [[float(t), *map(float, y)] for t, y in zip(traj.times, traj.states)]
    prefix = out / config.outputs.prefix
    write_csv(f"{prefix}_trajectory.csv", config, header, rows)
    write_json(f"{prefix}_termination.json", {**_provenance(config), "termination": traj.termination.to_dict(),
                                               "n_steps": traj.n_steps})
    if config.outputs.plot:
        plotting.plot_trajectory(traj, f"{prefix}_trajectory.svg", config.outputs.log_scale)
    return EXIT_NUMERICAL if traj.termination.kind is TerminationKind.STEP_FAILURE else EXIT_OK


def cmd_verify(config: RunConfig, out: Path):
    spec = config.spec
    if spec.system is System.P:
        raise ValidationError("residual verification covers the pressureless systems A, BProof and BTheorem")
    opts = dict(n_samples=config.outputs.n_samples, time_slices=config.outputs.time_slices,
                method=Method(config.outputs.method), seed=config.outputs.seed)
    traj = integrate(spec, config.integration)
    report = verify_trajectory(spec, traj, **opts)
    payload = {**_provenance(config), "termination": traj.termination.to_dict(), "report": report.to_dict()}
    if spec.system in (System.BPROOF, System.BTHEOREM):
        payload["adjudication"] = adjudicate(spec, config.integration, **opts).to_dict()
    write_json(out / f"{config.outputs.prefix}_residuals.json", payload)
    return EXIT_NUMERICAL if traj.termination.kind is TerminationKind.STEP_FAILURE else EXIT_OK


def cmd_classify(config: RunConfig, out: Path):
    report = dynamics.analyze(config.spec, config.integration, config.lyapunov_options)
    write_json(out / f"{config.outputs.prefix}_report.json", {**_provenance(config), "report": report.to_dict()})
    if report.classification.kind is dynamics.ClassKind.UNDETERMINED:
        return EXIT_NUMERICAL
    return EXIT_OK


SWEEP_HEADER = [
    "spec_hash", "system", "N", "theta", "xi", "kappa1", "kappa2", "alpha", "a0", "a1",
    "classification", "t_star", "T", "bound_satisfied", "predicts_global", "lambda_1",
    "first_integral_drift", "recurrence_min", "chaotic_candidate", "periodic_candidate", "error",
]


def sweep_row(report: dynamics.RunReport):
    s = report.spec
    vec = lambda v: ";".join("%.17g" % x for x in v)  # noqa: E731
    rec = report.recurrence_min
    return [
        dynamics.spec_hash(s), s.system.value, s.dimension, s.theta, s.xi, s.kappa1, s.kappa2, s.alpha,
        vec(s.a0), vec(s.a1), report.classification.kind.value, report.classification.t_star,
        report.theorem_bound, report.bound_satisfied, report.predicts_global, report.leading_exponent,
        report.first_integral_drift, rec if math.isfinite(rec) else None,
        report.chaotic_candidate, report.periodic_candidate, report.error,
    ]


def cmd_sweep(config: RunConfig, out: Path):
    grid = list(config.grid) if config.grid is not None else dynamics.default_grid()
    reports = dynamics.sweep(grid, config.integration, lyapunov=config.lyapunov_options)
    prefix = out / config.outputs.prefix
    write_csv(f"{prefix}_sweep.csv", config, SWEEP_HEADER, [sweep_row(r) for r in reports])
    if config.outputs.plot:
        plotting.plot_sweep(reports, f"{prefix}_sweep.svg")
    return EXIT_OK


def cmd_lyapunov(config: RunConfig, out: Path):
    opts = config.lyapunov_options or {"t_transient": 0.0, "t_span": config.integration.t_end, "renorm_dt": 1.0}
    result = dynamics.lyapunov_spectrum(config.spec, config.integration, **opts)
    prefix = out / config.outputs.prefix
    write_json(f"{prefix}_lyapunov.json", {**_provenance(config), "options": opts, "lyapunov": result.to_dict()})
    if config.outputs.plot:
        plotting.plot_lyapunov(result, f"{prefix}_lyapunov.svg")
    return EXIT_OK


def cmd_mass(config: RunConfig, out: Path):
    spec = config.spec
    p = profile_for(spec)
    times = list(config.outputs.mass_times) or [0.0]
    traj = integrate(spec, config.integration)
    entries = []
    try:
        reference = total_mass(spec, p)
    except InfiniteMassError as exc:
        reference = math.inf
        note = str(exc)
    else:
        note = None
    for t in times:
        entry = {"t": t, "similarity_mass": reference, "physical_mass": None}
        if math.isfinite(reference) and spec.dimension <= 3:
            entry["physical_mass"] = physical_mass(spec, p, dense_eval(traj, t))
        entries.append(entry)
    physical = [e["physical_mass"] for e in entries if e["physical_mass"] is not None]
    drift = None
    if physical and reference > 0.0:
        drift = max(abs(m - reference) for m in physical) / reference
    payload = {**_provenance(config), "finite": math.isfinite(reference), "note": note,
               "masses": entries, "relative_drift": drift, "termination": traj.termination.to_dict()}
    write_json(out / f"{config.outputs.prefix}_mass.json", payload)
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "lyapunov": cmd_lyapunov,
    "mass": cmd_mass,
}


_HELP = {
    "simulate": "integrate and write the trajectory CSV and termination JSON",
    "verify": "evaluate PDE residuals of the reconstructed fields",
    "classify": "classify blowup or global behaviour against the predicted bound",
    "sweep": "analyse a grid of specs, one CSV row each",
    "lyapunov": "compute the Lyapunov spectrum",
    "mass": "total mass at the requested times",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="ellipflow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        cmd = sub.add_parser(name, help=_HELP[name])
        cmd.add_argument("--config", required=True, help="JSON run configuration ('-' reads standard input)")
        cmd.add_argument("--out", default=".", help="output directory (created if missing)")
    return parser


def run_subcommand(argv=None):
    args = build_parser().parse_args(argv)
    try:
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        config = parse_config(text)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](config, out)
    except (SchemaError, ValidationError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BlowupDuringLyapunov as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (EllipflowError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main(argv=None):
    sys.exit(run_subcommand(argv))


if __name__ == "__main__":
    main()
