import os
import sys
from collections import defaultdict

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = {
    1: "oracle equivalence over the full grid",
    2: "entanglement and Bell thresholds",
    3: "point values at T = 0.40, p = 0",
    4: "point values at T = 0.3, p = 0.85",
    5: "asymptotic filtration",
    6: "Bell branch continuity and limit",
    7: "Bell factor unchanged by the measurement",
    8: "metric correctness",
    9: "tomography chain",
    10: "polarizing reduction identity",
}
_results = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _results[marker.args[0]].append((item.name, rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        checks = _results[n]
        status = "PASS" if all(ok for _, ok in checks) else "FAIL"
        tr.write_line(f"criterion {n:2d} {status}: {_CRITERIA.get(n, '')}")
        for name, ok in checks:
            tr.write_line(f"    {'pass' if ok else 'FAIL'}  {name}")
