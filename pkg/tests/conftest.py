import os
import sys
from collections import defaultdict

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = defaultdict(list)  # n -> [(part, outcome, detail)]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, part): acceptance criterion number and the part it checks")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        n, part = mark.args
        detail = getattr(item, "acceptance_detail", "")
        if call.excinfo is not None and not detail:
            detail = call.excinfo.exconly().splitlines()[0][:160]
        _CRITERIA[n].append((part, call.excinfo is None, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        parts = _CRITERIA[n]
        ok = all(p[1] for p in parts)
        summary = "; ".join(f"{part}: {'ok' if good else 'FAILED'}{' (' + d + ')' if d else ''}" for part, good, d in parts)
        tr.write_line(f"criterion {n:2d}  {'PASS' if ok else 'FAIL'}  {summary}")
