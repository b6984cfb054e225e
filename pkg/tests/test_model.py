import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kslab.exceptions import DomainError
from kslab.model import (
    ConstantPlusCosine,
    ConstantPlusRandomNoise,
    GaussianBump,
    InitialData,
    ModelParams,
    SensitivitySpec,
    build_initial_data,
    eval_sensitivity,
    validate_envelope,
)
from kslab.solver.grid import Grid

UNIT_SQUARE = Grid((16, 16), (1.0, 1.0))


@pytest.mark.parametrize("c, a, k, s, expected", [
    (1.0, 0.0, 2.0, 1.0, 1.0),
    (1.0, 1.0, 2.0, 1.0, 0.25),
    (0.5, 1.0, 3.0, 0.0, 0.5),
])
def test_sensitivity_hand_values(c, a, k, s, expected):
    kind = "power_law" if c == 1.0 else "scaled_power_law"
    assert eval_sensitivity(SensitivitySpec(kind, c), a, k, s) == pytest.approx(expected, rel=1e-15)


def test_sensitivity_singular_at_origin():
    with pytest.raises(DomainError):
        eval_sensitivity(SensitivitySpec(), 0.0, 2.0, 0.0)


@pytest.mark.parametrize("scale", [0.0, 1.1, -0.5])
def test_sensitivity_scale_outside_unit_interval_rejected(scale):
    with pytest.raises(DomainError):
        SensitivitySpec("scaled_power_law", scale)


def test_power_law_scale_must_be_one():
    with pytest.raises(DomainError):
        SensitivitySpec("power_law", 0.5)


@given(
    a=st.floats(0.0, 5.0), k=st.floats(1.01, 5.0),
    s1=st.floats(1e-3, 1e3), ds=st.floats(1e-3, 1e3), c=st.floats(0.01, 1.0),
)
def test_sensitivity_strictly_decreasing(a, k, s1, ds, c):
    spec = SensitivitySpec("scaled_power_law", c)
    assert eval_sensitivity(spec, a, k, s1 + ds) < eval_sensitivity(spec, a, k, s1)


@pytest.mark.parametrize("kwargs", [
    dict(chi=1.0, a=-0.1, k=2.0), dict(chi=1.0, a=1.0, k=1.0), dict(chi=-1.0, a=1.0, k=2.0),
    dict(chi=1.0, a=1.0, k=2.0, dim_n=3),
])
def test_model_params_validation(kwargs):
    with pytest.raises(DomainError):
        ModelParams(**kwargs)


def test_constant_initial_data():
    spec = InitialData(ConstantPlusCosine(1.0, 0.0, (3, 2)), ConstantPlusCosine(1.0))
    f = build_initial_data(UNIT_SQUARE, spec)
    assert np.all(f.u0 == 1.0)
    assert f.M == pytest.approx(1.0, abs=1e-14)
    assert f.v_star == 1.0


def test_cosine_perturbation_keeps_mass():
    spec = InitialData(ConstantPlusCosine(1.0, 0.5, (1, 1)), ConstantPlusCosine(1.0))
    f = build_initial_data(UNIT_SQUARE, spec)
    assert f.M == pytest.approx(1.0, abs=1e-12)
    assert f.u0.max() > 1.4


def test_negative_initial_data_rejected():
    spec = InitialData(ConstantPlusCosine(1.0, 1.5, (1, 1)), ConstantPlusCosine(1.0))
    with pytest.raises(DomainError):
        build_initial_data(UNIT_SQUARE, spec)


def test_zero_initial_data_rejected():
    spec = InitialData(ConstantPlusCosine(0.0), ConstantPlusCosine(1.0))
    with pytest.raises(DomainError):
        build_initial_data(UNIT_SQUARE, spec)


@given(
    mean=st.floats(0.1, 10.0), rel_amp=st.floats(0.0, 0.99), seed=st.integers(0, 2**32 - 1),
    n=st.integers(4, 24), L=st.floats(0.5, 3.0),
)
@settings(max_examples=50)
def test_noise_builder_mass_and_admissibility(mean, rel_amp, seed, n, L):
    grid = Grid((n,), (L,))
    spec = InitialData(ConstantPlusRandomNoise(mean, rel_amp * mean, seed), ConstantPlusCosine(1.0))
    f = build_initial_data(grid, spec)
    assert f.M == pytest.approx(float(np.sum(f.u0)) * L / n, rel=1e-12)
    assert np.all(f.u0 >= 0) and np.any(f.u0 > 0)
    assert f.v_star == float(f.v0.min())


def test_noise_is_seeded():
    a = ConstantPlusRandomNoise(1.0, 0.3, 7).evaluate(UNIT_SQUARE)
    b = ConstantPlusRandomNoise(1.0, 0.3, 7).evaluate(UNIT_SQUARE)
    c = ConstantPlusRandomNoise(1.0, 0.3, 8).evaluate(UNIT_SQUARE)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_gaussian_bump_has_requested_mass():
    bump = GaussianBump(2.5, (0.3, 0.6), 0.1, 0.0)
    f = build_initial_data(UNIT_SQUARE, InitialData(bump, ConstantPlusCosine(1.0)))
    assert f.M == pytest.approx(2.5, rel=1e-12)


def test_mass_scaling_scales_u0_only():
    spec = InitialData(ConstantPlusCosine(1.0, 0.3, (1, 1)), ConstantPlusCosine(2.0))
    base = build_initial_data(UNIT_SQUARE, spec)
    scaled = build_initial_data(UNIT_SQUARE, spec.with_mass_scale(4.0))
    assert scaled.M == pytest.approx(4 * base.M, rel=1e-14)
    np.testing.assert_allclose(scaled.u0, 4 * base.u0, rtol=1e-14)
    assert np.array_equal(scaled.v0, base.v0)


def test_envelope_power_law_is_tight():
    rep = validate_envelope(SensitivitySpec(), 1.0, 2.0, np.geomspace(1e-3, 1e3, 50))
    assert rep.ok and rep.max_relative_slack == pytest.approx(0.0, abs=1e-14)


def test_envelope_scaled_slack():
    rep = validate_envelope(SensitivitySpec("scaled_power_law", 0.5), 0.5, 3.0, np.linspace(0.1, 5, 20))
    assert rep.ok
    assert rep.min_relative_slack == pytest.approx(0.5) and rep.max_relative_slack == pytest.approx(0.5)
