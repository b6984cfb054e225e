"""Command-line entry point: ``kslab {run,sweep,theory,verify}``.

Exit codes: 0 converged (or success), 1 failed check, 2 undecided,
3 diverged, 64 configuration error, 70 internal solver error.
"""

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import theory
from .config import load_config, resolved_dict
from .diagnostics import reference_constants
from .exceptions import ConfigError, KSLabError
from .experiments import SweepSpec, run_sweep, write_sweep_outputs
from .model import build_initial_data
from .simulation import DiagnosticsSettings, simulate
from .solver.scheme import CONVERGED, DIVERGED, UNDECIDED
from .verification import FAIL, verify_battery

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_UNDECIDED = 2
EXIT_DIVERGED = 3
EXIT_CONFIG = 64
EXIT_SOFTWARE = 70
STATUS_EXIT = {CONVERGED: EXIT_OK, UNDECIDED: EXIT_UNDECIDED, DIVERGED: EXIT_DIVERGED}
DEFAULT_OUT = "ks_out"
OUT_ENV = "KS_LAB_OUT"

logger = logging.getLogger("kslab")


def _overrides(args):
    out = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        out.append(f"seed={args.seed}")
    if getattr(args, "workers", None) is not None:
        out.append(f"sweep.workers={args.workers}")
    return out


def _out_dir(args, cfg):
    return Path(args.out or os.environ.get(OUT_ENV) or cfg.output_dir or DEFAULT_OUT)


def _diag_settings(cfg):
    d = cfg.diagnostics
    return DiagnosticsSettings(d.tail_fraction, d.c0, d.chi0, d.K1, d.K5, d.K)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=False, default=float, allow_nan=True) + "\n"


def _publish(staging, out_dir):
    """Move finished artifacts from ``staging`` into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for item in staging.iterdir():
        shutil.move(str(item), str(out_dir / item.name))


def cmd_run(args):
    cfg = load_config(args.config, _overrides(args))
    out_dir = _out_dir(args, cfg)
    params, grid = cfg.model_params(), cfg.grid_obj()
    fields = build_initial_data(grid, cfg.initial_data_spec())
    try:
        outcome = simulate(params, grid, fields.u0, fields.v0, cfg.solver_config(), _diag_settings(cfg))
    except KSLabError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE
    with tempfile.TemporaryDirectory() as tmp:
        staging = Path(tmp)
        outcome.trajectory.write_csv(staging / "trajectory.csv")
        (staging / "summary.json").write_text(_dump(outcome.summary()))
        (staging / "config_resolved.json").write_text(_dump(resolved_dict(cfg)))
        _publish(staging, out_dir)
    kappa = None if outcome.fit is None else outcome.fit.kappa
    print(f"{outcome.status}: t={outcome.result.state.t:.6g}, steps={outcome.result.n_steps}, kappa={kappa}")
    return STATUS_EXIT[outcome.status]


def cmd_sweep(args):
    cfg = load_config(args.config, _overrides(args))
    if cfg.sweep is None:
        raise ConfigError("sweep command needs a 'sweep' section in the config")
    sw = cfg.sweep
    if isinstance(sw.chi, list):
        chis = sw.chi
    else:
        if sw.chi.start <= 0 or sw.chi.stop <= 0 or sw.chi.num < 1:
            raise ConfigError("sweep.chi log range needs positive start/stop and num >= 1")
        chis = np.geomspace(sw.chi.start, sw.chi.stop, sw.chi.num).tolist()
    if sw.workers < 1:
        raise ConfigError("sweep.workers must be at least 1")
    spec = SweepSpec(
        chis, sw.M, cfg.model_params(), cfg.grid_obj(), cfg.initial_data_spec(), cfg.solver_config(),
        _diag_settings(cfg), sw.repetitions, cfg.seed, sw.workers, sw.max_runs,
    )
    out_dir = _out_dir(args, cfg)
    result = run_sweep(spec)
    summary = write_sweep_outputs(result, out_dir)
    (out_dir / "config_resolved.json").write_text(_dump(resolved_dict(cfg)))
    comp = summary["comparison"]
    for entry in comp["per_M"]:
        print(f"M={entry['M']:g}: chi_emp={entry['chi_emp']}, delta={entry['delta']}, chi*={entry['chi_star']}")
    print(comp["caveat"])
    if comp["violations"]:
        print(f"CONSISTENCY VIOLATION: cells with chi < delta diverged: {comp['violations']}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def theory_inputs(cfg):
    """Resolve theory inputs from the config; returns keyword arguments for the report."""
    params, grid = cfg.model_params(), cfg.grid_obj()
    t, d = cfg.theory, cfg.diagnostics
    if t.M is None or t.v_star is None:
        fields = build_initial_data(grid, cfg.initial_data_spec())
    M = t.M if t.M is not None else fields.M
    v_star = t.v_star if t.v_star is not None else fields.v_star
    if v_star <= 0:
        raise ConfigError("theory needs v_star > 0 (set theory.v_star or use v0 with a positive minimum)")
    K1_ref, K5_ref = reference_constants(grid.volume)
    eta_t = t.eta_tilde if t.eta_tilde is not None else theory.eta(d.c0, M, v_star)
    chi0 = t.chi0 if t.chi0 is not None else d.chi0
    if chi0 is None:
        chi0 = 0.5 * theory.chi_star(params.a, params.k, params.dim_n, eta_t)
    return dict(
        chi0=chi0, a=params.a, k=params.k, n=params.dim_n, M=M, v_star=v_star, c0=d.c0,
        K1=d.K1 if d.K1 is not None else K1_ref, K5=d.K5 if d.K5 is not None else K5_ref,
        lengths=grid.lengths, M0=t.M0, eta_tilde=t.eta_tilde,
        K1_source=theory.CONFIGURED, K5_source=theory.CONFIGURED, mass_independent=t.mass_independent,
    )


def cmd_theory(args):
    cfg = load_config(args.config, _overrides(args))
    kwargs = theory_inputs(cfg)
    try:
        report = theory.theory_report(**kwargs).to_dict()
    except KSLabError as exc:
        print(_dump({"error": type(exc).__name__, "message": str(exc), "inputs": _jsonable(kwargs)}), end="")
        return EXIT_FAIL
    print(_dump(report), end="")
    return EXIT_OK


def _jsonable(kwargs):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in kwargs.items()}


def cmd_verify(args):
    cfg = load_config(args.config, _overrides(args))
    results = verify_battery(cfg)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if r.status == FAIL]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="kslab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("run", cmd_run, "integrate one configuration and write trajectory/summary artifacts"),
        ("sweep", cmd_sweep, "run a (chi, M) sweep and compare with the theoretical thresholds"),
        ("theory", cmd_theory, "print the closed-form theory report as JSON"),
        ("verify", cmd_verify, "run the fast property battery"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry (repeatable)")
        p.add_argument("--seed", type=int, help="global seed (overrides config 'seed')")
        if name in ("run", "sweep"):
            p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or config output_dir)")
        if name == "sweep":
            p.add_argument("--workers", type=int, help="worker processes")
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KSLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
