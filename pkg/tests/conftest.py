import math
from pathlib import Path

import numpy as np
import pytest

from hvs_sharpness.presets import preset_kernels

DATA = Path(__file__).parent / "data"
SHARP = sorted((DATA / "sharp").glob("*.png"))


@pytest.fixture(scope="session")
def natural1():
    spec, kernel = preset_kernels("natural-1")[0]
    return spec, kernel


@pytest.fixture(scope="session")
def sharp_paths():
    assert len(SHARP) == 10
    return SHARP


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def dense_grid(n=4097):
    return np.linspace(0.0, math.pi, n)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", []):
                if name == "criterion" and rep.when == "call":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
