import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vitmat.rng import RngState
from vitmat.vit import ViTConfig, init_params

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def tiny_config():
    return ViTConfig.tiny(3)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, RngState(0))


@pytest.fixture
def rand_image():
    def make(h=32, w=32, seed=0):
        return (RngState(seed).uniform((h, w, 3)) * 256).astype(np.uint8)
    return make


# -- acceptance reporting ------------------------------------------------------------
# Each acceptance criterion records one line here; the summary hook prints them
# after the run so they appear in the terminal log even when stdout is captured.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
