"""Parameter sweeps over (chi, M) and comparison with the theoretical thresholds.

Each sweep cell is an independent run; cells are mapped over a process
pool and gathered in grid order, so results do not depend on the worker
count. Classification above the empirical boundary is observational only:
reaching ``t_end`` without meeting the tolerance is reported as
``undecided``, not as blow-up.
"""

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import theory
from .exceptions import ConfigError, KSLabError, SolverError
from .model import build_initial_data
from .simulation import DiagnosticsSettings, simulate
from .solver.scheme import CONVERGED, DIVERGED

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = (
    "chi", "M", "seed", "status", "kappa", "r2", "t_final", "delta_theory", "chi_star_theory", "wall_ms",
)
CAVEAT = (
    "Cells marked undecided reached t_end without meeting the convergence tolerance; "
    "classifications above the empirical boundary are observations, not blow-up claims."
)
STATUS_MAP = {CONVERGED: "converged", DIVERGED: "diverged"}


@dataclass
class SweepSpec:
    chi_values: List[float]
    M_values: List[float]
    params: object
    grid: object
    initial_data: object
    cfg: object
    diag: DiagnosticsSettings = field(default_factory=DiagnosticsSettings)
    repetitions: int = 1
    seed: int = 0
    workers: int = 1
    max_runs: int = 1000

    def __post_init__(self):
        self.chi_values = [float(c) for c in self.chi_values]
        self.M_values = [float(m) for m in self.M_values]
        if not self.chi_values or not self.M_values:
            raise ConfigError("sweep needs at least one chi and one M value")
        if min(self.chi_values) < 0 or min(self.M_values) <= 0:
            raise ConfigError("sweep chi values must be >= 0 and M values > 0")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.n_runs > self.max_runs:
            raise ConfigError(f"sweep has {self.n_runs} runs, budget is {self.max_runs}")

    @property
    def n_runs(self):
        return len(self.chi_values) * len(self.M_values) * self.repetitions

    def cells(self):
        for M in self.M_values:
            for chi in self.chi_values:
                for rep in range(self.repetitions):
                    yield chi, M, self.seed + rep


@dataclass
class SweepRecord:
    chi: float
    M: float
    seed: int
    status: str
    kappa: Optional[float]
    r2: Optional[float]
    t_final: float
    delta_theory: Optional[float] = None
    chi_star_theory: Optional[float] = None
    wall_ms: float = 0.0
    K1_est: Optional[float] = None
    K5_est: Optional[float] = None
    v_star: Optional[float] = None
    lower_bound_violations: int = 0
    message: str = ""


@dataclass
class SweepResult:
    records: List[SweepRecord]
    theory: dict
    constants: dict

    def statuses(self, chi=None):
        return {(r.chi, r.M, r.seed): r.status for r in self.records if chi is None or r.chi == chi}


def _reseed(spec_field, seed):
    return replace(spec_field, seed=seed) if hasattr(spec_field, "seed") else spec_field


def _cell_initial_data(spec, M, seed):
    template = build_initial_data(spec.grid, spec.initial_data)
    data = spec.initial_data.with_mass_scale(M / template.M)
    return replace(data, u0=_reseed(data.u0, seed), v0=_reseed(data.v0, seed))


def _run_cell(args):
    spec, chi, M, seed = args
    t0 = time.perf_counter()
    params = replace(spec.params, chi=chi)
    try:
        fields = build_initial_data(spec.grid, _cell_initial_data(spec, M, seed))
        out = simulate(params, spec.grid, fields.u0, fields.v0, spec.cfg, spec.diag)
    except SolverError as exc:
        return SweepRecord(chi, M, seed, "diverged", None, None, math.nan,
                           wall_ms=1e3 * (time.perf_counter() - t0), message=str(exc))
    except KSLabError as exc:
        return SweepRecord(chi, M, seed, "error", None, None, math.nan,
                           wall_ms=1e3 * (time.perf_counter() - t0), message=str(exc))
    status = STATUS_MAP.get(out.status, "undecided")
    consts = out.constants
    return SweepRecord(
        chi, M, seed, status,
        None if out.fit is None else out.fit.kappa,
        None if out.fit is None else out.fit.r_squared,
        float(out.result.state.t),
        wall_ms=1e3 * (time.perf_counter() - t0),
        K1_est=None if consts is None else consts.K1_est,
        K5_est=None if consts is None else consts.K5_est,
        v_star=fields.v_star,
        lower_bound_violations=out.result.lower_bound_violations,
        message=out.reason,
    )


def pooled_constants(records, diag, volume):
    """K1, K5 for the theory curves: overrides, else medians over converged cells."""
    conv = [r for r in records if r.status == "converged" and r.K1_est is not None]
    K1 = diag.K1 if diag.K1 is not None else (float(np.median([r.K1_est for r in conv])) if conv else 1 / (2 * volume))
    K5 = diag.K5 if diag.K5 is not None else (float(np.median([r.K5_est for r in conv])) if conv else 2 / volume)
    source = "configured" if (diag.K1 is not None or not conv) else "empirical"
    return {"K1": K1, "K5": K5, "source": source, "n_converged": len(conv)}


def theory_curve(spec, M, v_star, K1, K5):
    """chi*(M) and delta(M) with ``M0 = M`` and ``chi0 = diag.chi0`` or ``chi*(M)/2``."""
    p = spec.params
    eta_M = theory.eta(spec.diag.c0, M, v_star)
    cs = theory.chi_star(p.a, p.k, p.dim_n, eta_M)
    chi0 = spec.diag.chi0 if spec.diag.chi0 is not None else 0.5 * cs
    d1 = theory.delta1(K5, theory.poincare_constant(spec.grid.lengths))
    return {
        "eta": eta_M,
        "chi_star": cs,
        "chi0": chi0,
        "delta1": d1,
        "delta": theory.delta(chi0, p.a, p.k, p.dim_n, K1, M, M, d1),
    }


def run_sweep(spec):
    """Execute every cell and attach theory values; per-cell failures never abort."""
    jobs = [(spec, chi, M, seed) for chi, M, seed in spec.cells()]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(_run_cell, jobs))
    else:
        records = [_run_cell(job) for job in jobs]

    consts = pooled_constants(records, spec.diag, spec.grid.volume)
    curves = {}
    for M in spec.M_values:
        v_star = next((r.v_star for r in records if r.M == M and r.v_star is not None), None)
        if v_star is None or v_star <= 0:
            continue
        curves[M] = theory_curve(spec, M, v_star, consts["K1"], consts["K5"])
    for r in records:
        if r.M in curves:
            r.delta_theory = curves[r.M]["delta"]
            r.chi_star_theory = curves[r.M]["chi_star"]
    return SweepResult(records, curves, consts)


def _upward_closed_exceptions(flags):
    """Fewest flips turning ``flags`` (ordered by M) into ``[False]*j + [True]*(n-j)``."""
    n = len(flags)
    best = n
    for j in range(n + 1):
        flips = sum(flags[:j]) + sum(not f for f in flags[j:])
        best = min(best, flips)
    return best


def compare_threshold(result):
    """Per-mass comparison of the empirical boundary with delta(M) and chi*(M)."""
    if not result.records:
        return {"per_M": [], "violations": [], "consistent": True, "caveat": CAVEAT}
    chis = sorted({r.chi for r in result.records})
    Ms = sorted({r.M for r in result.records})
    gaps = np.diff(chis)
    step = float(np.max(gaps)) if gaps.size else chis[0]
    per_M, violations = [], []
    for M in Ms:
        cells = [r for r in result.records if r.M == M]
        conv = [r.chi for r in cells if r.status == "converged"]
        chi_emp = max(conv) if conv else 0.0
        curve = result.theory.get(M)
        entry = {"M": M, "chi_emp": chi_emp if conv else None, "delta": None, "chi_star": None, "consistent": None}
        if curve is not None:
            d = curve["delta"]
            entry.update(delta=d, chi_star=curve["chi_star"], consistent=bool(d <= chi_emp + step))
            guaranteed = [r for r in cells if r.chi < d and r.status == "diverged"]
            for r in guaranteed:
                violations.append({"chi": r.chi, "M": M, "seed": r.seed, "delta": d})
            if not entry["consistent"]:
                logger.warning("delta(M=%g)=%.4g exceeds empirical boundary %.4g + step", M, d, chi_emp)
        per_M.append(entry)
    mono = {}
    for chi in chis:
        flags = []
        for M in Ms:
            cell = [r for r in result.records if r.chi == chi and r.M == M]
            flags.append(all(r.status == "converged" for r in cell))
        mono[str(chi)] = _upward_closed_exceptions(flags)
    deltas = [e["delta"] for e in per_M if e["delta"] is not None]
    stars = [e["chi_star"] for e in per_M if e["chi_star"] is not None]
    return {
        "per_M": per_M,
        "chi_step": step,
        "violations": violations,
        "upward_closed_exceptions": mono,
        "delta_strictly_increasing": bool(all(b > a for a, b in zip(deltas, deltas[1:]))),
        "chi_star_nondecreasing": bool(all(b >= a for a, b in zip(stars, stars[1:]))),
        "consistent": bool(not violations and all(e["consistent"] is not False for e in per_M)),
        "caveat": CAVEAT,
    }


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_sweep_outputs(result, out_dir, include_wall=True):
    """Write ``sweep.csv`` and ``sweep_summary.json``; returns the summary dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in result.records:
            row = asdict(r)
            if not include_wall:
                row["wall_ms"] = None
            w.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])
    comparison = compare_threshold(result)
    summary = {
        "n_runs": len(result.records),
        "status_counts": {s: sum(r.status == s for r in result.records) for s in ("converged", "undecided", "diverged", "error")},
        "constants": result.constants,
        "theory": {str(M): c for M, c in result.theory.items()},
        "comparison": comparison,
    }
    (out_dir / "sweep_summary.json").write_text(json.dumps(summary, indent=2, default=float))
    return summary
