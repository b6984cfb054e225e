"""Fast property battery shared by the ``verify`` command and the test suite.

Every check returns a :class:`PropertyResult`; checks whose precondition is
not met report ``skip`` rather than ``fail``.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import theory
from .diagnostics import reference_constants, tolerance
from .exceptions import KSLabError
from .model import build_initial_data
from .simulation import DiagnosticsSettings, simulate
from .solver.grid import Grid
from .solver.scheme import run

PASS, FAIL, SKIP = "pass", "fail", "skip"
MIN_REFINEMENT_RATIO = 1.8


@dataclass
class PropertyResult:
    name: str
    status: str
    detail: str = ""
    values: dict = None

    @property
    def ok(self):
        return self.status != FAIL

    def line(self):
        return f"{self.status.upper():4s}  {self.name}: {self.detail}"


def check_phi_identity(n=100, seed=0, h=1e-5, tol=1e-6):
    """Centred-difference check of ``phi' = -r phi / (a+s)**k`` plus Richardson order."""
    rng = np.random.default_rng(seed)
    worst, orders = 0.0, []
    for _ in range(n):
        s = float(rng.uniform(0.1, 10.0))
        r = float(rng.uniform(0.01, 2.0))
        a = float(rng.uniform(0.0, 2.0))
        k = float(rng.uniform(1.1, 4.0))
        worst = max(worst, theory.dphi_identity_residual(s, r, a, k, h))
        coarse = theory.dphi_identity_residual(s, r, a, k, 2e-2 * s)
        fine = theory.dphi_identity_residual(s, r, a, k, 1e-2 * s)
        if fine > 0:
            orders.append(math.log2(coarse / fine))
    order = float(np.median(orders))
    ok = worst < tol and order > 1.8
    return PropertyResult("phi_identity", PASS if ok else FAIL,
                          f"max residual {worst:.3g} at h={h:g}, observed order {order:.2f}",
                          {"max_residual": worst, "order": order})


def check_H_certificate(chi0, a, k, n, eta_tilde, sensitivity=None, n_chi=8):
    """Admissible (p, eps) for ``chi0`` and H <= 0 for ``n_chi`` values in (0, chi0]."""
    try:
        pe = theory.find_admissible_pe(chi0, a, k, n, eta_tilde)
    except KSLabError as exc:
        return PropertyResult("H_certificate", SKIP, f"no admissible pair: {exc}")
    worst = -math.inf
    for chi in np.linspace(chi0 / n_chi, chi0, n_chi):
        cert = theory.certify_H_nonpositive(pe, float(chi), a, k, sensitivity, eta_tilde)
        worst = max(worst, cert.max_H)
    ok = worst <= 1e-12
    return PropertyResult("H_certificate", PASS if ok else FAIL,
                          f"p={pe.p:.4g}, eps={pe.eps:.3g}, max H={worst:.3g} over {n_chi} chi values",
                          {"p": pe.p, "eps": pe.eps, "max_H": worst})


def check_mass_conservation(params, grid, u0, v0, cfg, n_steps=50, tol=1e-10):
    short = replace(cfg, max_steps=n_steps, tol_conv=min(cfg.tol_conv, 1e-300))
    try:
        res = run(params, grid, u0, v0, short)
    except KSLabError as exc:
        return PropertyResult("mass_conservation", FAIL, f"solver error: {exc}")
    ok = res.max_mass_drift <= tol
    return PropertyResult("mass_conservation", PASS if ok else FAIL,
                          f"max relative drift {res.max_mass_drift:.3g} over {res.n_steps} steps",
                          {"drift": res.max_mass_drift, "lower_bound_violations": res.lower_bound_violations})


def _lemma32_stats(params, grid, init_spec, cfg):
    fields = build_initial_data(grid, init_spec)
    out = simulate(params, grid, fields.u0, fields.v0, cfg, DiagnosticsSettings())
    tr = out.trajectory
    R = tr["lemma32_residual"][1:]
    D = tr["lemma32_defect"][1:]
    tol = tolerance(max(grid.h), cfg.dt_max, tr.meta["energy0"])
    return {
        "n": grid.n_cells[0],
        "dt": cfg.dt_max,
        "excursion": float(max(0.0, R.max())),
        "defect": float(np.abs(D).max()),
        "tol": tol,
        "within_tol": bool(np.all(R <= tol)),
    }


def lemma32_refinement(params, grid, init_spec, cfg):
    """Signal-energy residual at ``(h, dt)`` and ``(h/2, dt/2)``.

    The worst positive excursion must shrink by :data:`MIN_REFINEMENT_RATIO`
    (or vanish at both levels, as it does when the discrete operators make
    the residual nonpositive); the consistency defect must shrink by the
    same factor.
    """
    coarse = _lemma32_stats(params, grid, init_spec, cfg)
    # records of both levels fall on the same times
    fine_cfg = replace(cfg, dt_init=cfg.dt_init / 2, dt_max=cfg.dt_max / 2, output_stride=2 * cfg.output_stride)
    fine = _lemma32_stats(params, grid.refined(2), init_spec, fine_cfg)
    if coarse["excursion"] == 0 and fine["excursion"] == 0:
        exc_ratio = math.inf
    else:
        exc_ratio = coarse["excursion"] / fine["excursion"] if fine["excursion"] > 0 else math.inf
    def_ratio = coarse["defect"] / fine["defect"] if fine["defect"] > 0 else math.inf
    ok = (coarse["within_tol"] and fine["within_tol"] and exc_ratio >= MIN_REFINEMENT_RATIO
          and def_ratio >= MIN_REFINEMENT_RATIO)
    return {
        "coarse": coarse, "fine": fine, "excursion_ratio": exc_ratio, "defect_ratio": def_ratio, "ok": bool(ok),
    }


def check_lemma32_refinement(params, grid, init_spec, cfg):
    try:
        rep = lemma32_refinement(params, grid, init_spec, cfg)
    except KSLabError as exc:
        return PropertyResult("lemma32_refinement", FAIL, f"solver error: {exc}")
    c, f = rep["coarse"], rep["fine"]
    detail = (f"n={c['n']}->{f['n']}: excursion {c['excursion']:.3g}->{f['excursion']:.3g}, "
              f"defect {c['defect']:.3g}->{f['defect']:.3g} (ratio {rep['defect_ratio']:.2f})")
    return PropertyResult("lemma32_refinement", PASS if rep["ok"] else FAIL, detail, rep)


def _delta_reference(params, grid, u0, v0, diag):
    M = grid.integrate(u0)
    v_star = float(np.min(v0))
    if v_star <= 0:
        return None
    K1, K5 = reference_constants(grid.volume)
    K1 = diag.K1 if diag.K1 is not None else K1
    K5 = diag.K5 if diag.K5 is not None else K5
    eta = theory.eta(diag.c0, M, v_star)
    chi0 = diag.chi0 if diag.chi0 is not None else 0.5 * theory.chi_star(params.a, params.k, params.dim_n, eta)
    d1 = theory.delta1(K5, theory.poincare_constant(grid.lengths))
    return theory.delta(chi0, params.a, params.k, params.dim_n, K1, M, M, d1)


def check_lyapunov(params, grid, u0, v0, cfg, diag):
    """F nonincreasing from t* onward; skipped unless chi < delta.

    The precondition is screened with reference constants before running
    and confirmed with the empirical ones afterwards.
    """
    pre = _delta_reference(params, grid, u0, v0, diag)
    if pre is None or not params.chi < pre:
        return PropertyResult("lyapunov_monotone", SKIP,
                              f"precondition chi < delta not met (chi={params.chi:g}, delta={pre})")
    out = simulate(params, grid, u0, v0, cfg, diag)
    if out.theory is None or not params.chi < out.theory.delta:
        d = None if out.theory is None else out.theory.delta
        return PropertyResult("lyapunov_monotone", SKIP, f"precondition chi < delta not met (chi={params.chi:g}, delta={d})")
    i = out.t_star_index
    if i is None:
        return PropertyResult("lyapunov_monotone", FAIL, "lemma residuals never settle (no t*)")
    F = out.trajectory["F"][i:]
    worst = float(np.max(np.diff(F))) if F.size > 1 else 0.0
    ok = worst <= out.tol
    return PropertyResult("lyapunov_monotone", PASS if ok else FAIL,
                          f"max increase of F after t*={out.trajectory['t'][i]:.3g}: {worst:.3g} (tol {out.tol:.3g})",
                          {"max_increase": worst, "tol": out.tol})


def verify_battery(run_cfg, seed=None, fast_n=32):
    """Run every property for a validated :class:`~kslab.config.RunConfig`."""
    seed = run_cfg.seed if seed is None else seed
    params = run_cfg.model_params()
    grid = run_cfg.grid_obj()
    cfg = run_cfg.solver_config()
    init_spec = run_cfg.initial_data_spec()
    fields = build_initial_data(grid, init_spec)
    d = run_cfg.diagnostics
    diag = DiagnosticsSettings(d.tail_fraction, d.c0, d.chi0, d.K1, d.K5, d.K)

    results = [check_phi_identity(seed=seed)]

    eta_tilde = run_cfg.theory.eta_tilde
    if eta_tilde is None:
        eta_tilde = theory.eta(d.c0, fields.M, fields.v_star) if fields.v_star > 0 else None
    if eta_tilde is None:
        results.append(PropertyResult("H_certificate", SKIP, "min v0 = 0, no signal floor"))
    else:
        chi0 = run_cfg.theory.chi0 or d.chi0 or 0.5 * theory.chi_star(params.a, params.k, params.dim_n, eta_tilde)
        results.append(check_H_certificate(chi0, params.a, params.k, params.dim_n, eta_tilde, params.sensitivity))

    results.append(check_mass_conservation(params, grid, fields.u0, fields.v0, cfg))

    # short horizon on a coarse copy of the configured domain
    coarse = Grid(tuple(min(n, fast_n) for n in grid.n_cells), grid.lengths)
    scale = max(grid.h) / max(coarse.h)
    fast = replace(cfg, dt_init=cfg.dt_init / scale, dt_max=cfg.dt_max / scale)
    horizon = replace(fast, t_end=min(cfg.t_end, 20 * fast.dt_max), output_stride=1)
    results.append(check_lemma32_refinement(params, coarse, init_spec, horizon))

    cfields = build_initial_data(coarse, init_spec)
    results.append(check_lyapunov(params, coarse, cfields.u0, cfields.v0, fast, diag))
    return results
