from pathlib import Path

import numpy as np
import pytest

from syncontagion.game_engine import StrategyTable

TABLE1_ROWS = {
    "000": 1, "001": -1, "010": 1, "011": 1,
    "100": -1, "101": -1, "110": 1, "111": 1,
}


@pytest.fixture
def table1():
    return StrategyTable.from_rows(TABLE1_ROWS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


HERE = Path(__file__).parent
CONFIGS = HERE.parent / "configs"

# Small runs of every subcommand: (name, argv, output csv files).
CLI_CASES = [
    ("mg-sim", ["mg-sim", "--seed", "7", "--steps", "200", "--n-agents", "11", "--agent-actions"], ["steps.csv"]),
    ("dollar-sim", ["dollar-sim", "--seed", "7", "--steps", "200", "--n-agents", "11"], ["steps.csv"]),
    ("decoupling-scan", ["decoupling-scan", "--seed", "7", "--steps", "1000"], ["scan.csv"]),
    ("iaf-sim", ["iaf-sim", "--config", str(CONFIGS / "world6.ini"), "--steps", "300"], ["returns.csv"]),
    ("quake-trace", ["quake-trace", "--config", str(CONFIGS / "chain3.ini"), "--shock", "-0.07"], ["cascade.csv"]),
    ("opinion-sim", ["opinion-sim", "--config", str(CONFIGS / "opinion.ini"), "--steps", "300", "--agents", "200"],
     ["days.csv", "meetings.csv"]),
    ("change-blindness", ["change-blindness", "--config", str(HERE / "data" / "cb.ini")], ["bins.csv"]),
]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 13):
        if n not in mod.RESULTS:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN  (deselected, or raised before recording)")
            continue
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
