"""Run a simulation end to end and attach every diagnostic.

:class:`KellerSegelSimulator` exposes the same pipeline through the
scikit-learn estimator protocol (``get_params``/``set_params``/``fit``) so
that it can be cloned and grid-searched like any other estimator.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import theory
from ._validation import check_field
from .diagnostics import (
    DiagnosticsRecorder,
    EmpiricalConstants,
    KChoice,
    RateFit,
    choose_K,
    detect_t_star,
    estimate_constants,
    fit_kappa,
    monotone_onset,
    reference_constants,
    tolerance,
)
from .exceptions import EmptyBracketError, KSLabError, ShortTrajectoryError, WindowEmptyError
from .model import ModelParams, SensitivitySpec, build_initial_data
from .solver.grid import Grid
from .solver.scheme import CONVERGED, SolverConfig, run

logger = logging.getLogger(__name__)


@dataclass
class DiagnosticsSettings:
    tail_fraction: float = 0.25
    c0: float = 0.05
    chi0: Optional[float] = None
    K1: Optional[float] = None
    K5: Optional[float] = None
    K: Optional[float] = None


@dataclass
class Outcome:
    status: str
    reason: str
    result: object
    trajectory: object
    M: float
    v_star: float
    chi0: float
    weight: tuple
    constants: Optional[EmpiricalConstants]
    K1: float
    K5: float
    K1_source: str
    K5_source: str
    K_choice: Optional[KChoice]
    fit: Optional[RateFit]
    fit_error: Optional[str]
    t_star_index: Optional[int]
    monotone_index: int
    tol: float
    theory: Optional[object]
    theory_error: Optional[dict]

    def summary(self):
        tr = self.trajectory
        t = tr["t"]
        res = self.result
        return {
            "status": self.status,
            "reason": self.reason,
            "n_steps": res.n_steps,
            "t_final": float(res.state.t),
            "M": self.M,
            "v_star": self.v_star,
            "kappa_fit": None if self.fit is None else {
                "kappa": self.fit.kappa, "C": self.fit.C, "r2": self.fit.r_squared, "stderr": self.fit.stderr,
                "max_abs_residual": self.fit.max_abs_residual, "t_lo": self.fit.t_lo, "t_hi": self.fit.t_hi,
                "n_samples": self.fit.n_samples,
            },
            "kappa_fit_error": self.fit_error,
            "empirical_constants": None if self.constants is None else self.constants._asdict(),
            "constants_used": {"K1": self.K1, "K1_source": self.K1_source, "K5": self.K5, "K5_source": self.K5_source},
            "lyapunov": {
                "K": float(tr["K_used"][0]),
                "bracket": None if self.K_choice is None else [self.K_choice.lower, self.K_choice.upper],
                "t_star": None if self.t_star_index is None else float(t[self.t_star_index]),
                "monotone_onset": float(t[self.monotone_index]),
                "tol": self.tol,
            },
            "weighted_lp": {"p": self.weight[0], "r": self.weight[1], "chi0": self.chi0},
            "checks": {
                "max_mass_drift": res.max_mass_drift,
                "lower_bound_violations": res.lower_bound_violations,
                "min_lower_bound_ratio": None if math.isinf(res.min_lower_bound_ratio) else res.min_lower_bound_ratio,
                "dt_shrink_events": len(res.dt_shrinks),
            },
            "theory": self.theory.to_dict() if self.theory is not None else self.theory_error,
        }


def lp_weight(params, chi0, eta_tilde):
    """(p, r) for the weighted L^p functional.

    Uses the admissible pair for ``chi0`` when it exists; otherwise
    ``p = max(3n/4, 1.5)`` and ``r`` from ``eps = 1/2``.
    """
    try:
        pe = theory.find_admissible_pe(chi0, params.a, params.k, params.dim_n, eta_tilde)
        return pe.p, pe.r
    except KSLabError:
        p = max(0.75 * params.dim_n, 1.5)
        return p, theory.r_of(p, 0.5, chi0) if chi0 > 0 else 0.0


def default_chi0(params, c0, M, v_star):
    """Half the global-existence threshold at the configured signal bound."""
    return 0.5 * theory.chi_star(params.a, params.k, params.dim_n, theory.eta(c0, M, v_star))


def simulate(params, grid, u0, v0, cfg, diag=None):
    """Integrate, estimate constants, refit the Lyapunov weight and fit the rate."""
    diag = diag or DiagnosticsSettings()
    M = grid.integrate(u0)
    v_star = float(np.min(v0))
    C_P = theory.poincare_constant(grid.lengths)
    eta_cfg = theory.eta(diag.c0, M, v_star) if v_star > 0 else None
    if diag.chi0 is not None:
        chi0 = diag.chi0
    elif eta_cfg is not None:
        chi0 = default_chi0(params, diag.c0, M, v_star)
    else:
        chi0 = max(params.chi, 1e-12)
    weight = lp_weight(params, chi0, eta_cfg if eta_cfg is not None else 1.0)

    K1_ref, K5_ref = reference_constants(grid.volume)
    K1 = diag.K1 if diag.K1 is not None else K1_ref
    K5 = diag.K5 if diag.K5 is not None else K5_ref
    K_prov = diag.K
    if K_prov is None:
        try:
            K_prov = choose_K(params.chi, params.a, params.k, M, K1, K5, C_P).K
        except EmptyBracketError:
            K_prov = 0.5 / C_P

    recorder = DiagnosticsRecorder(params, grid, K_prov, weight, K1, K5)
    result = run(params, grid, u0, v0, cfg, recorder)
    traj = result.trajectory

    constants = None
    try:
        constants = estimate_constants(traj, M, diag.tail_fraction)
    except ShortTrajectoryError as exc:
        logger.info("no empirical constants: %s", exc)
    K1_source = K5_source = theory.CONFIGURED
    if diag.K1 is None and constants is not None:
        K1, K1_source = constants.K1_est, theory.EMPIRICAL
    if diag.K5 is None and constants is not None:
        K5, K5_source = constants.K5_est, theory.EMPIRICAL

    K_choice = None
    K = diag.K
    if K is None:
        try:
            K_choice = choose_K(params.chi, params.a, params.k, M, K1, K5, C_P)
            K = K_choice.K
        except EmptyBracketError as exc:
            logger.info("keeping provisional Lyapunov weight: %s", exc)
            K = K_prov
    traj.recompute(K=K, K1=K1, K5=K5)

    fit, fit_error = None, None
    try:
        fit = fit_kappa(traj["t"], traj["sup_u_dist"] + traj["sup_v_dist"], cfg.tol_conv)
    except WindowEmptyError as exc:
        fit_error = str(exc)

    tol = tolerance(max(grid.h), cfg.dt_max, traj.meta["energy0"])
    t_star = detect_t_star(traj, tol)
    mono = monotone_onset(traj["F"])

    report, report_error = None, None
    if eta_cfg is not None:
        try:
            report = theory.theory_report(
                chi0, params.a, params.k, params.dim_n, M, v_star, diag.c0, K1, K5, grid.lengths,
                K1_source=K1_source, K5_source=K5_source, mass_independent=params.a > 0,
            )
        except KSLabError as exc:
            report_error = {"error": type(exc).__name__, "message": str(exc)}
    else:
        report_error = {"error": "DomainError", "message": "min v0 = 0; eta undefined"}

    return Outcome(
        result.status, result.reason, result, traj, M, v_star, chi0, weight, constants,
        K1, K5, K1_source, K5_source, K_choice, fit, fit_error, t_star, mono, tol, report, report_error,
    )


class KellerSegelSimulator(BaseEstimator):
    """Estimator-style front end to :func:`simulate`.

    ``fit(u0, v0)`` integrates from the given cell fields on the grid
    described by ``n_cells``/``lengths``. Fitted attributes end in an
    underscore: ``status_``, ``trajectory_``, ``kappa_``, ``u_``, ``v_``,
    ``outcome_``.
    """

    def __init__(
        self, chi=1.0, a=1.0, k=2.0, sensitivity_scale=1.0, n_cells=(64, 64), lengths=(1.0, 1.0),
        dt_init=1e-3, dt_max=1e-3, cfl_safety=0.45, t_end=50.0, output_stride=10, tol_conv=1e-8,
        divergence_factor=1e3, reaction="implicit", ordering="u_then_v", max_steps=2_000_000,
        c0=0.05, tail_fraction=0.25, chi0=None, K1=None, K5=None, K=None,
    ):
        self.chi = chi
        self.a = a
        self.k = k
        self.sensitivity_scale = sensitivity_scale
        self.n_cells = n_cells
        self.lengths = lengths
        self.dt_init = dt_init
        self.dt_max = dt_max
        self.cfl_safety = cfl_safety
        self.t_end = t_end
        self.output_stride = output_stride
        self.tol_conv = tol_conv
        self.divergence_factor = divergence_factor
        self.reaction = reaction
        self.ordering = ordering
        self.max_steps = max_steps
        self.c0 = c0
        self.tail_fraction = tail_fraction
        self.chi0 = chi0
        self.K1 = K1
        self.K5 = K5
        self.K = K

    def _components(self):
        grid = Grid(tuple(np.atleast_1d(self.n_cells)), tuple(np.atleast_1d(self.lengths)))
        kind = "power_law" if self.sensitivity_scale == 1.0 else "scaled_power_law"
        params = ModelParams(self.chi, self.a, self.k, grid.dim, SensitivitySpec(kind, self.sensitivity_scale))
        cfg = SolverConfig(
            self.dt_init, self.dt_max, self.cfl_safety, self.t_end, self.output_stride, self.tol_conv,
            self.divergence_factor, self.reaction, self.ordering, self.max_steps,
        )
        diag = DiagnosticsSettings(self.tail_fraction, self.c0, self.chi0, self.K1, self.K5, self.K)
        return params, grid, cfg, diag

    def fit(self, X, y):
        """Integrate from ``u0 = X`` and ``v0 = y`` (arrays of the grid shape)."""
        params, grid, cfg, diag = self._components()
        u0 = check_field("u0", X, grid.shape)
        v0 = check_field("v0", y, grid.shape)
        if np.any(u0 < 0) or np.any(v0 < 0) or not np.any(u0 > 0) or not np.any(v0 > 0):
            raise ValueError("initial data must be nonnegative and not identically zero")
        out = simulate(params, grid, u0, v0, cfg, diag)
        self.outcome_ = out
        self.status_ = out.status
        self.trajectory_ = out.trajectory
        self.kappa_ = None if out.fit is None else out.fit.kappa
        self.u_ = out.result.state.u
        self.v_ = out.result.state.v
        self.t_ = out.result.state.t
        return self

    def fit_spec(self, initial_data):
        """Integrate from an :class:`~kslab.model.InitialData` spec."""
        _, grid, _, _ = self._components()
        fields = build_initial_data(grid, initial_data)
        return self.fit(fields.u0, fields.v0)

    def predict(self, X=None):
        """Terminal ``(u, v)`` fields of the fitted run."""
        check_is_fitted(self, "status_")
        return self.u_, self.v_
