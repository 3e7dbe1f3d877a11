import numpy as np
import pytest

from oracles import make_dnf


@pytest.fixture
def xor_vocab():
    return ("c1", "c2")


@pytest.fixture
def xor_dnf(xor_vocab):
    return make_dnf(xor_vocab, [[(0, True), (1, False)], [(0, False), (1, True)]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance reporting ------------------------------------------------------

_ACCEPTANCE: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "passed": 0, "failed": []})
    if report.failed or (report.skipped and report.when != "teardown"):
        entry["failed"].append(item.name)
    elif report.when == "call" and report.passed:
        entry["passed"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        ok = entry["passed"] > 0 and not entry["failed"]
        line = f"criterion {number} ({entry['title']}): {'PASS' if ok else 'FAIL'}"
        if entry["failed"]:
            line += f"  [failing: {', '.join(sorted(set(entry['failed'])))}]"
        terminalreporter.write_line(line)
