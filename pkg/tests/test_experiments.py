import csv
import json

import pytest

from kslab.config import parse_config
from kslab.exceptions import ConfigError
from kslab.experiments import (
    SWEEP_COLUMNS,
    SweepRecord,
    SweepResult,
    SweepSpec,
    _upward_closed_exceptions,
    compare_threshold,
    run_sweep,
    write_sweep_outputs,
)
from kslab.simulation import DiagnosticsSettings


def _spec(small_config, chis, Ms, **kw):
    small_config["model"].update(a=0.0)
    small_config["initial_data"]["u0"] = {"kind": "constant_plus_random_noise", "mean": 1.0, "amplitude": 0.2}
    cfg = parse_config(small_config)
    return SweepSpec(chis, Ms, cfg.model_params(), cfg.grid_obj(), cfg.initial_data_spec(), cfg.solver_config(),
                     DiagnosticsSettings(), **kw)


def test_pure_diffusion_cell_converges(small_config):
    res = run_sweep(_spec(small_config, [0.0], [1.0]))
    (rec,) = res.records
    assert rec.status == "converged" and rec.kappa > 0


def test_sweep_is_deterministic_across_workers(small_config):
    a = run_sweep(_spec(small_config, [0.0, 0.5], [1.0, 1.5], workers=1))
    b = run_sweep(_spec(small_config, [0.0, 0.5], [1.0, 1.5], workers=2))
    assert [(r.chi, r.M, r.seed, r.status, r.kappa, r.t_final) for r in a.records] == \
        [(r.chi, r.M, r.seed, r.status, r.kappa, r.t_final) for r in b.records]
    assert a.theory == b.theory


def test_repetitions_use_distinct_seeds(small_config):
    res = run_sweep(_spec(small_config, [0.5], [1.0], repetitions=2, seed=5))
    assert [r.seed for r in res.records] == [5, 6]
    assert res.records[0].kappa != res.records[1].kappa


def test_budget_and_validation(small_config):
    with pytest.raises(ConfigError):
        _spec(small_config, [1.0, 2.0], [1.0, 2.0], max_runs=3)
    with pytest.raises(ConfigError):
        _spec(small_config, [], [1.0])
    with pytest.raises(ConfigError):
        _spec(small_config, [1.0], [0.0])


def test_outputs(small_config, tmp_path):
    res = run_sweep(_spec(small_config, [0.0, 0.5], [1.0]))
    summary = write_sweep_outputs(res, tmp_path)
    rows = list(csv.reader(open(tmp_path / "sweep.csv")))
    assert tuple(rows[0]) == SWEEP_COLUMNS and len(rows) == 3
    on_disk = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert on_disk["comparison"]["caveat"] and summary["n_runs"] == 2
    assert on_disk["comparison"]["per_M"][0]["chi_emp"] == 0.5


def test_empty_report():
    rep = compare_threshold(SweepResult([], {}, {}))
    assert rep["per_M"] == [] and rep["violations"] == []


def _rec(chi, M, status):
    return SweepRecord(chi, M, 0, status, None, None, 1.0)


def test_violation_is_flagged():
    recs = [_rec(0.1, 1.0, "diverged"), _rec(1.0, 1.0, "converged")]
    res = SweepResult(recs, {1.0: {"delta": 0.5, "chi_star": 2.0}}, {})
    rep = compare_threshold(res)
    assert rep["violations"] == [{"chi": 0.1, "M": 1.0, "seed": 0, "delta": 0.5}]
    assert not rep["consistent"]


def test_consistency_direction():
    recs = [_rec(1.0, 1.0, "converged"), _rec(2.0, 1.0, "undecided"), _rec(1.0, 2.0, "converged"),
            _rec(2.0, 2.0, "converged")]
    theory = {1.0: {"delta": 0.3, "chi_star": 1.0}, 2.0: {"delta": 0.6, "chi_star": 1.5}}
    rep = compare_threshold(SweepResult(recs, theory, {}))
    assert [e["chi_emp"] for e in rep["per_M"]] == [1.0, 2.0]
    assert rep["consistent"] and rep["delta_strictly_increasing"] and rep["chi_star_nondecreasing"]
    assert rep["upward_closed_exceptions"] == {"1.0": 0, "2.0": 0}


@pytest.mark.parametrize("flags, expected", [
    ([False, False, True, True], 0), ([True, True, True], 0), ([False, True, False, True], 1),
    ([True, False, False, False], 1), ([True, False, True, False], 2),
])
def test_upward_closed_exceptions(flags, expected):
    assert _upward_closed_exceptions(flags) == expected
