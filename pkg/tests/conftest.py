import numpy as np
import pytest

from sstl.harness import PRESETS, gen_trajectory
from sstl.plant import TABLE_MEAN_ACT, HysteresisParams

DT = 0.002


def trapezoid(low=2.0, high=25.0, rise=3.0, hold=1.0, fall=8.0, fs=500.0):
    n = int(round((rise + hold + fall) * fs))
    t = np.arange(n) / fs
    return np.interp(t, [0, rise, rise + hold, rise + hold + fall], [low, high, high, low])


def triangle(low, high, n_half, periods):
    up = np.linspace(low, high, n_half, endpoint=False)
    down = np.linspace(high, low, n_half, endpoint=False)
    return np.concatenate([np.concatenate([up, down]) for _ in range(periods)] + [[low]])


@pytest.fixture
def mean_plant():
    return HysteresisParams(*TABLE_MEAN_ACT)


@pytest.fixture
def probe_act():
    return gen_trajectory(PRESETS["probe_act"])


# Acceptance lines are collected here and echoed in the terminal summary,
# so they show up even when pytest captures stdout.
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
