import re
from collections import defaultdict
from pathlib import Path

import pytest

import cdi

DATA = Path(cdi.__file__).parent / "data"

CRITERIA = {
    "AC1": "triangle coherence values and unique optimum {c}, < 1 ms",
    "AC2": "exact solver vs brute force on 200 random graphs, constraints vs post-filter, < 30 s",
    "AC3": "annealer hits the exact optimum on >= 99/100 random graphs",
    "AC4": "per-edge median minimizes L1 against a 0.01 grid, 50 sets",
    "AC5": "beta = ln 9 within 1e-9, residual < 1e-10, beta=0 uniform within 1e-12",
    "AC6": "single-cut outcome tables exact, uniform mixture = 1/12, 1/12, 7/12, 1/4",
    "AC7": "prompt carries the instruction text verbatim, example list parses to 4 edges",
    "AC8": "convergence profile zero/exhaustive checks, stopping rule picks 3",
    "AC9": "cassette replay yields byte-identical artifacts across runs",
}

_results = defaultdict(list)
_AC = re.compile(r"test_(ac\d+)_")


@pytest.fixture
def data_dir() -> Path:
    return DATA


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    m = _AC.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _results[m.group(1).upper()].append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for ac, desc in CRITERIA.items():
        if ac not in _results:
            status = "NOT RUN"
        else:
            status = "PASS" if all(_results[ac]) else "FAIL"
        terminalreporter.write_line(f"{ac} {status}: {desc}")
