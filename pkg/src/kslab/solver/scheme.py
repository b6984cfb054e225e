"""IMEX finite-volume time stepping for the chemotaxis system.

One step of the default ``u_then_v`` ordering:

1. explicit donor-cell chemotaxis ``u* = u - dt div(chi u S(v) grad v)``
2. implicit diffusion ``(I - dt Lap) u_new = u*``
3. implicit signal update ``((1+dt) I - dt Lap) v_new = v + dt u_new``

Step 1 is nonnegative under the outflow CFL bound used by
:func:`adaptive_dt`; steps 2 and 3 invert M-matrices.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import (
    CFLViolation,
    DomainError,
    LinearSolverError,
    PositivityError,
    SolverError,
    TimeStepUnderflowError,
)
from .linalg import implicit_solve
from .operators import chemotactic_flux, face_velocities, flux_divergence, max_outflow_rate

logger = logging.getLogger(__name__)

CONVERGED = "converged"
UNDECIDED = "t_end_reached"
DIVERGED = "diverged"

DT_FLOOR = 1e-12
# tolerated negative roundoff relative to max(u) after an implicit solve
ROUNDOFF_NEG = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    dt_init: float = 1e-3
    dt_max: float = 1e-3
    cfl_safety: float = 0.45
    t_end: float = 50.0
    output_stride: int = 10
    tol_conv: float = 1e-8
    divergence_factor: float = 1e3
    reaction: str = "implicit"
    ordering: str = "u_then_v"
    max_steps: int = 2_000_000
    cg_rtol: float = 1e-12

    def __post_init__(self):
        for name in ("dt_init", "dt_max", "t_end", "tol_conv", "divergence_factor", "cg_rtol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.dt_init > self.dt_max:
            raise DomainError("dt_init must not exceed dt_max")
        if not 0 < self.cfl_safety <= 1:
            raise DomainError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.output_stride < 1 or self.max_steps < 1:
            raise DomainError("output_stride and max_steps must be positive")
        if self.reaction not in ("implicit", "explicit"):
            raise DomainError(f"reaction must be 'implicit' or 'explicit', got {self.reaction!r}")
        if self.ordering not in ("u_then_v", "v_then_u"):
            raise DomainError(f"ordering must be 'u_then_v' or 'v_then_u', got {self.ordering!r}")
        if self.cg_rtol > 1e-10:
            raise DomainError("cg_rtol must be at most 1e-10")


@dataclass
class State:
    t: float
    u: np.ndarray
    v: np.ndarray
    step: int = 0


def adaptive_dt(state, cfg, params, grid):
    """Largest stable step: ``min(dt_max, cfl/outflow_rate, cfl * 1 if reaction explicit)``."""
    w = face_velocities(state.v, grid, params.chi, params.sensitivity, params.a, params.k)
    rate = max_outflow_rate(w, grid)
    dt = cfg.dt_max
    if rate > 0:
        dt = min(dt, cfg.cfl_safety / rate)
    if cfg.reaction == "explicit":
        dt = min(dt, cfg.cfl_safety)
    if dt < DT_FLOOR:
        raise TimeStepUnderflowError(f"time step {dt:.3g} below floor {DT_FLOOR}", state.step, state.t)
    return dt


def _transport_diffuse_u(u, v, dt, params, grid, cfg):
    fluxes = chemotactic_flux(u, v, grid, params.chi, params.sensitivity, params.a, params.k)
    u_star = u - dt * flux_divergence(fluxes, grid)
    if np.min(u_star) < 0:
        raise CFLViolation(f"explicit transport produced min u* = {np.min(u_star):.3g}")
    return implicit_solve(grid, 1.0, dt, u_star, cfg.cg_rtol)


def _update_v(v, u_src, dt, grid, cfg):
    if cfg.reaction == "implicit":
        return implicit_solve(grid, 1.0 + dt, dt, v + dt * u_src, cfg.cg_rtol)
    return implicit_solve(grid, 1.0, dt, v + dt * (u_src - v), cfg.cg_rtol)


def _clean_roundoff(name, f, state):
    lo = np.min(f)
    if lo < 0:
        if lo < -ROUNDOFF_NEG * max(np.max(np.abs(f)), 1.0):
            raise PositivityError(f"{name} became negative (min {lo:.3g})", state.step, state.t)
        f = np.maximum(f, 0.0)
    return f


def step(state, dt, cfg, params, grid):
    """Advance one step of size ``dt``; returns a new :class:`State`."""
    if cfg.ordering == "u_then_v":
        u = _transport_diffuse_u(state.u, state.v, dt, params, grid, cfg)
        u = _clean_roundoff("u", u, state)
        v = _update_v(state.v, u, dt, grid, cfg)
    else:
        v = _update_v(state.v, state.u, dt, grid, cfg)
        v = _clean_roundoff("v", v, state)
        u = _transport_diffuse_u(state.u, v, dt, params, grid, cfg)
        u = _clean_roundoff("u", u, state)
    v = _clean_roundoff("v", v, state)
    return State(state.t + dt, u, v, state.step + 1)


@dataclass
class RunResult:
    status: str
    state: State
    recorder: object = None
    reason: str = ""
    n_steps: int = 0
    dt_shrinks: list = field(default_factory=list)
    lower_bound_violations: int = 0
    min_lower_bound_ratio: float = math.inf
    max_mass_drift: float = 0.0

    @property
    def trajectory(self):
        return None if self.recorder is None else self.recorder.trajectory()


def _sup_dists(state, mean):
    return float(np.max(np.abs(state.u - mean))), float(np.max(np.abs(state.v - mean)))


def run(params, grid, u0, v0, cfg, recorder=None):
    """Integrate until convergence, ``t_end`` or divergence.

    ``recorder`` (optional) receives ``start(state)``, ``on_step(prev, new,
    dt, record)`` and ``finish(state, status)``; every ``output_stride``-th
    step and the terminal step are flagged for recording.
    """
    state = State(0.0, np.array(u0, dtype=np.float64), np.array(v0, dtype=np.float64), 0)
    mass0 = grid.integrate(state.u)
    mean = mass0 / grid.volume
    v_min0 = float(state.v.min())
    u_cap = cfg.divergence_factor * float(state.u.max())
    if recorder is not None:
        recorder.start(state)

    result = RunResult(UNDECIDED, state, recorder)
    dt_prev = cfg.dt_init
    first = True
    status = None
    while status is None:
        if state.t >= cfg.t_end * (1 - 1e-14):
            status, result.reason = UNDECIDED, "t_end reached"
            break
        if state.step >= cfg.max_steps:
            status, result.reason = UNDECIDED, "step budget exhausted"
            break
        try:
            bound = adaptive_dt(state, cfg, params, grid)
        except TimeStepUnderflowError as exc:
            status, result.reason = DIVERGED, str(exc)
            break
        dt = min(bound, cfg.dt_init if first else 2 * dt_prev)
        if bound < dt_prev and not first:
            result.dt_shrinks.append((state.t, bound))
            logger.debug("dt shrink to %.3g at t=%.4g", bound, state.t)
        dt = min(dt, cfg.t_end - state.t)
        while True:
            try:
                new = step(state, dt, cfg, params, grid)
                break
            except CFLViolation:
                dt *= 0.5
                result.dt_shrinks.append((state.t, dt))
                if dt < DT_FLOOR:
                    status, result.reason = DIVERGED, "time step underflow after CFL retries"
                    new = None
                    break
            except LinearSolverError as exc:
                raise SolverError(str(exc), state.step, state.t) from exc
        if new is None:
            break
        first = False
        dt_prev = dt

        lower = math.exp(-new.t) * v_min0
        vmin = float(new.v.min())
        if lower > 0:
            ratio = vmin / lower
            result.min_lower_bound_ratio = min(result.min_lower_bound_ratio, ratio)
            if vmin < lower:
                result.lower_bound_violations += 1
        drift = abs(grid.integrate(new.u) - mass0) / mass0
        result.max_mass_drift = max(result.max_mass_drift, drift)

        if not (np.all(np.isfinite(new.u)) and np.all(np.isfinite(new.v))):
            status, result.reason = DIVERGED, "non-finite values"
        elif float(new.u.max()) > u_cap:
            status, result.reason = DIVERGED, f"max u exceeded {cfg.divergence_factor:g} x initial max"
        else:
            su, sv = _sup_dists(new, mean)
            if su < cfg.tol_conv and sv < cfg.tol_conv:
                status, result.reason = CONVERGED, "sup-distance below tolerance"
        terminal = status is not None or new.t >= cfg.t_end * (1 - 1e-14) or new.step >= cfg.max_steps
        if recorder is not None:
            recorder.on_step(state, new, dt, record=terminal or new.step % cfg.output_stride == 0)
        state = new

    result.status = status
    result.state = state
    result.n_steps = state.step
    if recorder is not None:
        recorder.finish(state, status)
    return result

