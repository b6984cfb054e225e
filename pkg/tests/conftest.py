import copy

import pytest

from kslab.config import default_config_dict


@pytest.fixture
def base_config():
    return copy.deepcopy(default_config_dict())


@pytest.fixture
def small_config(base_config):
    """Acceptance physics on a coarse grid with a short horizon."""
    cfg = base_config
    cfg["grid"]["n_cells"] = [16, 16]
    cfg["solver"].update(dt_init=4e-3, dt_max=4e-3, t_end=3.0, output_stride=2)
    return cfg


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
