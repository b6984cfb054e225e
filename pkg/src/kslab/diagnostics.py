"""Monitored quantities, empirical constants and decay-rate fits."""

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptyBracketError, SaturationError, ShortTrajectoryError, WindowEmptyError
from .solver.operators import grad_norm_sq
from .theory import phi

COLUMNS = (
    "t",
    "mass",
    "min_v",
    "max_u",
    "sup_u_dist",
    "sup_v_dist",
    "l2_u_dist",
    "l2_v_dist",
    "F",
    "K_used",
    "lp_weighted",
    "uSv_sup",
    "lemma31_residual",
    "lemma32_residual",
)

# per-record ingredients kept so that K- and constant-dependent columns can
# be recomputed after the run
_EXTRA = ("step", "dt", "ddt_u2", "grad_u2_mid", "grad_v2_mid", "lemma32_defect")

# tol(h, dt) = LEMMA_TOL_C * (h^2 + dt) * E0, where E0 is the initial
# quadratic energy ||u0 - m||^2 + ||v0 - m||^2. C is calibrated from the
# worst signal-energy consistency defect on the acceptance run at
# (32^2, 2e-3), (64^2, 1e-3), (128^2, 5e-4): defect / ((h^2 + dt) E0) =
# 0.0052, 0.0065, 0.0074; doubled and rounded.
LEMMA_TOL_C = 0.015


def tolerance(h, dt, energy0, C=LEMMA_TOL_C):
    return C * (h * h + dt) * energy0


class DiagRecord(NamedTuple):
    t: float
    mass: float
    min_v: float
    max_u: float
    sup_u_dist: float
    sup_v_dist: float
    l2_u_dist: float
    l2_v_dist: float
    F: float
    K_used: float
    lp_weighted: float
    uSv_sup: float
    lemma31_residual: float
    lemma32_residual: float


def lyapunov_F(u, v, u0_mean, K, grid):
    """``int (u - m)^2 + K int (v - m)^2`` by cell-sum quadrature."""
    return grid.integrate((u - u0_mean) ** 2) + K * grid.integrate((v - u0_mean) ** 2)


class KChoice(NamedTuple):
    K: float
    lower: float
    upper: float


def choose_K(chi, a, k, M, K1, K5, C_P):
    """Lyapunov weight inside ``[2 K5^2 M^2 chi^2 / (a + K1 M)^(2k), 1/C_P)``.

    Returns the geometric mean of the endpoints; when ``chi = 0`` the lower
    endpoint vanishes and the midpoint ``1 / (2 C_P)`` is used instead.
    """
    lower = 2.0 * K5**2 * M**2 * chi**2 / (a + K1 * M) ** (2 * k)
    upper = 1.0 / C_P
    if lower >= upper:
        raise EmptyBracketError(
            f"empty K bracket [{lower:.4g}, {upper:.4g}): chi M/(a+K1 M)^k is too large for these estimates"
        )
    K = math.sqrt(lower * upper) if lower > 0 else 0.5 * upper
    return KChoice(K, lower, upper)


def _mid(prev, new):
    return 0.5 * (prev.u + new.u), 0.5 * (prev.v + new.v)


def lemma32_residual(prev, new, dt, u0_mean, grid, return_defect=False):
    """Signed excess in the signal energy inequality over one step.

    ``R = (||e1||^2 - ||e0||^2)/dt + 2 ||grad v_m||^2 + ||e_m||^2 - ||d_m||^2``
    with ``e = v - m``, ``d = u - m`` and midpoint fields. The continuum
    value is ``-||e - d||^2``; the defect ``R + ||e_m - d_m||^2`` is the pure
    discretisation error.
    """
    e0 = grid.integrate((prev.v - u0_mean) ** 2)
    e1 = grid.integrate((new.v - u0_mean) ** 2)
    um, vm = _mid(prev, new)
    em2 = grid.integrate((vm - u0_mean) ** 2)
    dm2 = grid.integrate((um - u0_mean) ** 2)
    R = (e1 - e0) / dt + 2.0 * grad_norm_sq(vm, grid) + em2 - dm2
    if return_defect:
        return R, R + grid.integrate((vm - um) ** 2)
    return R


def lemma31_coefficient(chi, a, k, K1, K5, M):
    return 4.0 * K5**2 * M**2 * chi**2 / (a + K1 * M) ** (2 * k)


def lemma31_residual(prev, new, dt, u0_mean, chi, a, k, K1, K5, M, grid):
    """Signed excess of ``(d/dt)||u-m||^2 + ||grad u||^2`` over its chemotactic bound."""
    d0 = grid.integrate((prev.u - u0_mean) ** 2)
    d1 = grid.integrate((new.u - u0_mean) ** 2)
    um, vm = _mid(prev, new)
    coef = lemma31_coefficient(chi, a, k, K1, K5, M)
    return (d1 - d0) / dt + grad_norm_sq(um, grid) - coef * grad_norm_sq(vm, grid)


def weighted_lp(u, v, p, r, a, k, grid):
    """``int u^p phi(v)``; saturation of phi propagates."""
    return grid.integrate(u**p * phi(v, r, a, k))


@dataclass(frozen=True)
class RateFit:
    kappa: float
    intercept: float
    r_squared: float
    t_lo: float
    t_hi: float
    stderr: float
    max_abs_residual: float
    n_samples: int

    @property
    def C(self):
        return math.exp(self.intercept)


def fit_window(y, tol_conv):
    """Index range ``[lo, hi]`` from the first sample below ``y0/10`` to the last above ``100 tol_conv``."""
    y = np.asarray(y, dtype=np.float64)
    below = np.flatnonzero(y < y[0] / 10.0)
    above = np.flatnonzero(y > 100.0 * tol_conv)
    if below.size == 0 or above.size == 0:
        return None
    return int(below[0]), int(above[-1])


def fit_kappa(t, y, tol_conv=1e-8, min_samples=20):
    """Least-squares fit of ``log y = intercept - kappa t`` inside the decay window."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    win = fit_window(y, tol_conv)
    if win is None or win[1] - win[0] + 1 < min_samples:
        raise WindowEmptyError("series did not decay enough to fit an exponential rate")
    lo, hi = win
    tt, yy = t[lo : hi + 1], y[lo : hi + 1]
    if np.any(yy <= 0):
        raise WindowEmptyError("non-positive values inside the fit window")
    ly = np.log(yy)
    A = np.column_stack([np.ones_like(tt), tt])
    (c0, c1), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (c0 + c1 * tt)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    n = tt.size
    return RateFit(
        kappa=float(-c1),
        intercept=float(c0),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        t_lo=float(tt[0]),
        t_hi=float(tt[-1]),
        stderr=math.sqrt(ss_res / (n - 2)),
        max_abs_residual=float(np.max(np.abs(resid))),
        n_samples=int(n),
    )


class ExponentialDecayRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_kappa`.

    ``X`` holds sample times (shape ``(n,)`` or ``(n, 1)``), ``y`` the
    decaying positive quantity.
    """

    def __init__(self, tol_conv=1e-8, min_samples=20):
        self.tol_conv = tol_conv
        self.min_samples = min_samples

    def fit(self, X, y):
        t = np.asarray(X, dtype=np.float64).reshape(-1)
        fit = fit_kappa(t, y, self.tol_conv, self.min_samples)
        self.kappa_ = fit.kappa
        self.intercept_ = fit.intercept
        self.r_squared_ = fit.r_squared
        self.stderr_ = fit.stderr
        self.window_ = (fit.t_lo, fit.t_hi)
        self.fit_ = fit
        return self

    def predict(self, X):
        check_is_fitted(self, "kappa_")
        t = np.asarray(X, dtype=np.float64).reshape(-1)
        return np.exp(self.intercept_ - self.kappa_ * t)


class EmpiricalConstants(NamedTuple):
    K1_est: float
    K5_est: float
    eta_emp: float
    tail_start: float
    n_tail: int


def estimate_constants(trajectory, M, tail_fraction=0.25, min_records=10):
    """Tail surrogates for the liminf of min v and the limsup of max u."""
    n = len(trajectory)
    n_tail = int(math.ceil(tail_fraction * n))
    if n_tail < min_records:
        raise ShortTrajectoryError(f"tail holds {n_tail} records, need {min_records}")
    tail = slice(n - n_tail, n)
    min_v = float(np.min(trajectory["min_v"][tail]))
    max_u = float(np.max(trajectory["max_u"][tail]))
    return EmpiricalConstants(min_v / (2.0 * M), 2.0 * max_u / M, min_v, float(trajectory["t"][n - n_tail]), n_tail)


def reference_constants(volume):
    """Equilibrium values ``K1 = 1/(2|Omega|)``, ``K5 = 2/|Omega|`` used before a run exists."""
    return 1.0 / (2.0 * volume), 2.0 / volume


class Trajectory:
    """Column store of diagnostic records."""

    def __init__(self, columns, meta=None):
        self.columns = {name: np.asarray(values, dtype=np.float64) for name, values in columns.items()}
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.columns["t"])

    def __getitem__(self, name):
        return self.columns[name]

    def records(self):
        return [DiagRecord(*(float(self.columns[c][i]) for c in COLUMNS)) for i in range(len(self))]

    def recompute(self, K=None, K1=None, K5=None):
        """Refresh F/K_used and the density-energy residual with new constants."""
        m = self.meta
        K1 = m["K1"] if K1 is None else K1
        K5 = m["K5"] if K5 is None else K5
        if K is not None:
            self.columns["K_used"] = np.full(len(self), float(K))
            self.columns["F"] = self.columns["l2_u_dist"] ** 2 + K * self.columns["l2_v_dist"] ** 2
            m["K"] = float(K)
        coef = lemma31_coefficient(m["chi"], m["a"], m["k"], K1, K5, m["M"])
        res = self.columns["ddt_u2"] + self.columns["grad_u2_mid"] - coef * self.columns["grad_v2_mid"]
        res[self.columns["step"] == 0] = 0.0
        self.columns["lemma31_residual"] = res
        m["K1"], m["K5"] = float(K1), float(K5)
        return self

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            for i in range(len(self)):
                writer.writerow([repr(float(self.columns[c][i])) for c in COLUMNS])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(x) for x in row] for row in reader]
        data = np.array(rows).reshape(-1, len(header))
        return cls({h: data[:, i] for i, h in enumerate(header)})


class DiagnosticsRecorder:
    """Run hook that builds a :class:`Trajectory`.

    ``weight`` is the ``(p, r)`` pair of the weighted L^p functional;
    ``K1``/``K5`` are provisional constants for the density-energy residual and
    ``K`` the Lyapunov weight; all can be refreshed afterwards through
    :meth:`Trajectory.recompute`.
    """

    def __init__(self, params, grid, K, weight, K1, K5):
        self.params = params
        self.grid = grid
        self.K = float(K)
        self.weight = weight
        self.K1 = K1
        self.K5 = K5
        self.rows = {c: [] for c in COLUMNS + _EXTRA}
        self._last_recorded_step = -1

    def start(self, state):
        self.M = self.grid.integrate(state.u)
        self.mean = self.M / self.grid.volume
        self.energy0 = self.grid.integrate((state.u - self.mean) ** 2) + self.grid.integrate(
            (state.v - self.mean) ** 2
        )
        self._append(state, None, None)

    def on_step(self, prev, new, dt, record):
        if record:
            self._append(new, prev, dt)

    def finish(self, state, status):
        if self._last_recorded_step != state.step:
            # terminal state reached without a step (e.g. dt underflow)
            self._append(state, None, None)
        self.status = status

    def _append(self, state, prev, dt):
        g, p = self.grid, self.params
        m = self.mean
        du = state.u - m
        dv = state.v - m
        l2u = math.sqrt(g.integrate(du * du))
        l2v = math.sqrt(g.integrate(dv * dv))
        try:
            lp = weighted_lp(state.u, state.v, self.weight[0], self.weight[1], p.a, p.k, g)
        except SaturationError:
            lp = math.nan
        row = {
            "t": state.t,
            "mass": g.integrate(state.u),
            "min_v": float(state.v.min()),
            "max_u": float(state.u.max()),
            "sup_u_dist": float(np.max(np.abs(du))),
            "sup_v_dist": float(np.max(np.abs(dv))),
            "l2_u_dist": l2u,
            "l2_v_dist": l2v,
            "F": l2u * l2u + self.K * l2v * l2v,
            "K_used": self.K,
            "lp_weighted": lp,
            "uSv_sup": float(np.max(state.u * p.S(state.v))) if (p.a > 0 or state.v.min() > 0) else math.inf,
            "step": state.step,
        }
        if prev is None:
            row.update(dt=0.0, ddt_u2=0.0, grad_u2_mid=0.0, grad_v2_mid=0.0, lemma31_residual=0.0,
                       lemma32_residual=0.0, lemma32_defect=0.0)
        else:
            um, vm = _mid(prev, state)
            d0 = g.integrate((prev.u - m) ** 2)
            gu = grad_norm_sq(um, g)
            gv = grad_norm_sq(vm, g)
            ddt = (l2u * l2u - d0) / dt
            coef = lemma31_coefficient(p.chi, p.a, p.k, self.K1, self.K5, self.M)
            R32, defect = lemma32_residual(prev, state, dt, m, g, return_defect=True)
            row.update(dt=dt, ddt_u2=ddt, grad_u2_mid=gu, grad_v2_mid=gv, lemma31_residual=ddt + gu - coef * gv,
                       lemma32_residual=R32, lemma32_defect=defect)
        for key, val in row.items():
            self.rows[key].append(val)
        self._last_recorded_step = state.step

    def trajectory(self):
        p = self.params
        meta = {
            "chi": p.chi, "a": p.a, "k": p.k, "M": self.M, "mean": self.mean, "K": self.K,
            "K1": self.K1, "K5": self.K5, "energy0": self.energy0,
            "h": max(self.grid.h), "weight_p": self.weight[0], "weight_r": self.weight[1],
        }
        return Trajectory(self.rows, meta)


def detect_t_star(trajectory, tol):
    """First record index after which both lemma residuals stay within ``tol``.

    Records with index 0 carry no step and are skipped. Returns ``None``
    when the residuals never settle.
    """
    ok = (trajectory["lemma31_residual"] <= tol) & (trajectory["lemma32_residual"] <= tol)
    ok[0] = True
    bad = np.flatnonzero(~ok)
    idx = 1 if bad.size == 0 else int(bad[-1]) + 1
    return idx if idx < len(trajectory) else None


def monotone_onset(F):
    """First index after which ``F`` never increases."""
    inc = np.flatnonzero(np.diff(F) > 0)
    return 0 if inc.size == 0 else int(inc[-1]) + 1
