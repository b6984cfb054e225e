import json

import pytest

from kslab.config import apply_overrides, default_config, load_config, parse_config, resolved_dict
from kslab.exceptions import ConfigError


def test_default_config_is_acceptance_run():
    cfg = default_config()
    assert cfg.model_params().chi == 1.0 and cfg.grid_obj().n_cells == (64, 64)
    assert cfg.solver_config().t_end == 50.0


def test_unknown_keys_rejected(base_config):
    base_config["model"]["chi0"] = 1.0
    with pytest.raises(ConfigError, match="chi0"):
        parse_config(base_config)


def test_overrides_are_json_typed(base_config):
    out = apply_overrides(base_config, ["model.chi=0.5", "solver.reaction=explicit", "grid.n_cells=[8, 8]"])
    assert out["model"]["chi"] == 0.5 and out["solver"]["reaction"] == "explicit" and out["grid"]["n_cells"] == [8, 8]
    assert base_config["model"]["chi"] == 1.0


def test_malformed_override():
    with pytest.raises(ConfigError):
        apply_overrides({}, ["model.chi"])


@pytest.mark.parametrize("override", [
    "solver.cfl_safety=5", "model.k=1.0", "grid.n_cells=[2, 2]", "model.dim_n=1",
    "initial_data.u0.amplitude=1.5", "solver.dt_init=1.0",
])
def test_semantic_errors_become_config_errors(base_config, override):
    with pytest.raises(ConfigError):
        parse_config(base_config, [override])


def test_noise_seed_defaults_to_global_seed(base_config):
    base_config["initial_data"]["u0"] = {"kind": "constant_plus_random_noise", "mean": 1.0, "amplitude": 0.1}
    base_config["seed"] = 42
    cfg = parse_config(base_config)
    assert cfg.initial_data_spec().u0.seed == 42
    assert resolved_dict(cfg)["initial_data"]["u0"]["seed"] == 42


def test_resolved_config_round_trips(base_config, tmp_path):
    cfg = parse_config(base_config, ["model.chi=0.7"])
    path = tmp_path / "c.json"
    path.write_text(json.dumps(resolved_dict(cfg)))
    again = load_config(path)
    assert resolved_dict(again) == resolved_dict(cfg)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad)
