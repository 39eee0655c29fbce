import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from promisetune.space import BINARY, ENUM, INT, ConfigSpace, OptionDef

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def mixed_space():
    return ConfigSpace((
        OptionDef("BZip2", BINARY),
        OptionDef("BlockSize", INT, 0, 20),
        OptionDef("mode", ENUM, labels=("fast", "normal", "ultra")),
        OptionDef("threads", INT, 1, 8),
    ))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
