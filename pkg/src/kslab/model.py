"""Continuous problem data: parameters, sensitivity functions, initial data.

Sensitivities are restricted to the scaled power-law family
``S(s) = c / (a + s)**k`` with ``0 < c <= 1``, which covers the admissible
envelope ``0 <= S(s) <= (a + s)**-k`` from the boundary (``c = 1``) into
its interior.
"""

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Union

import numpy as np

from ._validation import check_positive
from .exceptions import DomainError
from .solver.grid import Grid

POWER_LAW = "power_law"
SCALED_POWER_LAW = "scaled_power_law"


@dataclass(frozen=True)
class SensitivitySpec:
    kind: str = POWER_LAW
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in (POWER_LAW, SCALED_POWER_LAW):
            raise DomainError(f"unknown sensitivity kind {self.kind!r}")
        if self.kind == POWER_LAW and self.scale != 1.0:
            raise DomainError("power_law sensitivity has scale 1; use scaled_power_law")
        if not (0.0 < self.scale <= 1.0):
            raise DomainError(f"sensitivity scale must lie in (0, 1], got {self.scale}")

    def __call__(self, s, a, k):
        return eval_sensitivity(self, a, k, s)


def eval_sensitivity(spec, a, k, s):
    """Evaluate ``c / (a + s)**k``; vectorised over ``s``."""
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr < 0):
        raise DomainError("sensitivity evaluated at a negative signal value")
    base = a + s_arr
    if np.any(base <= 0):
        raise DomainError("singular sensitivity: a = 0 and s = 0")
    out = spec.scale / base**k
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the chemotaxis system.

    ``chi = 0`` is accepted so that pure-diffusion reference runs share the
    same code path.
    """

    chi: float
    a: float
    k: float
    dim_n: int = 2
    sensitivity: SensitivitySpec = field(default_factory=SensitivitySpec)

    def __post_init__(self):
        check_positive("chi", self.chi, strict=False)
        check_positive("a", self.a, strict=False)
        if not self.k > 1:
            raise DomainError(f"sensitivity exponent k must exceed 1, got {self.k}")
        if self.dim_n not in (1, 2):
            raise DomainError(f"dim_n must be 1 or 2, got {self.dim_n}")

    def S(self, s):
        return eval_sensitivity(self.sensitivity, self.a, self.k, s)


# --- initial data -----------------------------------------------------------


@dataclass(frozen=True)
class ConstantPlusCosine:
    """``mean + amplitude * prod_i cos(m_i pi x_i / L_i)``."""

    mean: float
    amplitude: float = 0.0
    modes: tuple = (1,)

    def evaluate(self, grid):
        modes = tuple(self.modes) + (0,) * (grid.dim - len(self.modes))
        out = np.ones(grid.shape)
        for x, m, L in zip(grid.centers(), modes[: grid.dim], grid.lengths):
            out = out * np.cos(m * np.pi * x / L)
        return self.mean + self.amplitude * out

    def scaled(self, factor):
        return replace(self, mean=self.mean * factor, amplitude=self.amplitude * factor)


@dataclass(frozen=True)
class ConstantPlusRandomNoise:
    """``mean + amplitude * U(-1, 1)`` per cell, seeded."""

    mean: float
    amplitude: float = 0.0
    seed: int = 0

    def evaluate(self, grid):
        rng = np.random.default_rng(self.seed)
        return self.mean + self.amplitude * rng.uniform(-1.0, 1.0, size=grid.shape)

    def scaled(self, factor):
        return replace(self, mean=self.mean * factor, amplitude=self.amplitude * factor)


@dataclass(frozen=True)
class GaussianBump:
    """``floor + mass * g`` with ``g`` a Gaussian normalised to unit discrete mass."""

    mass: float
    center: tuple = (0.5,)
    width: float = 0.1
    floor: float = 0.0

    def evaluate(self, grid):
        check_positive("width", self.width)
        center = tuple(self.center) + (0.5,) * (grid.dim - len(self.center))
        r2 = sum((x - c) ** 2 for x, c in zip(grid.centers(), center))
        g = np.exp(-r2 / (2.0 * self.width**2))
        g /= grid.integrate(g)
        return self.floor + self.mass * g

    def scaled(self, factor):
        return replace(self, mass=self.mass * factor, floor=self.floor * factor)


FieldSpec = Union[ConstantPlusCosine, ConstantPlusRandomNoise, GaussianBump]


@dataclass(frozen=True)
class InitialData:
    u0: FieldSpec
    v0: FieldSpec

    def with_mass_scale(self, factor):
        """Scale the density profile by ``factor``; the signal profile is kept."""
        return replace(self, u0=self.u0.scaled(factor))


class InitialFields(NamedTuple):
    u0: np.ndarray
    v0: np.ndarray
    M: float
    v_star: float


def _check_admissible(name, values):
    if np.any(values < 0):
        raise DomainError(f"{name} has negative cell values (min {values.min():.3g})")
    if not np.any(values > 0):
        raise DomainError(f"{name} is identically zero")


def build_initial_data(grid, spec):
    """Evaluate ``spec`` on ``grid`` and validate nonnegativity/nontriviality.

    Returns the two fields together with the discrete mass of ``u0`` and the
    discrete minimum of ``v0``.
    """
    u0 = np.asarray(spec.u0.evaluate(grid), dtype=np.float64)
    v0 = np.asarray(spec.v0.evaluate(grid), dtype=np.float64)
    _check_admissible("u0", u0)
    _check_admissible("v0", v0)
    M = grid.integrate(u0)
    if M <= 0:
        raise DomainError("u0 has zero total mass")
    return InitialFields(u0, v0, M, float(v0.min()))


class EnvelopeReport(NamedTuple):
    ok: bool
    max_relative_slack: float
    min_relative_slack: float


def validate_envelope(spec, a, k, samples):
    """Check ``0 <= S(s) <= (a+s)**-k`` at each sample.

    Relative slack is ``1 - S(s) (a+s)**k``; zero means the envelope is
    attained.
    """
    s = np.asarray(samples, dtype=np.float64)
    if np.any(s <= 0):
        raise DomainError("envelope samples must be positive")
    S = np.atleast_1d(eval_sensitivity(spec, a, k, s))
    envelope = 1.0 / (a + s) ** k
    slack = 1.0 - S / envelope
    ok = bool(np.all(S >= 0) and np.all(S <= envelope * (1 + 1e-15)))
    return EnvelopeReport(ok, float(slack.max()), float(slack.min()))
