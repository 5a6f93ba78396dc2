"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_OUTCOMES = {}   # criterion id -> (title, [(test name, passed, message)])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    cid, title = marker.args
    message = ""
    if rep.failed:
        crash = getattr(rep.longrepr, "reprcrash", None)
        message = crash.message.splitlines()[0] if crash else str(rep.longrepr).splitlines()[-1]
    _OUTCOMES.setdefault(cid, (title, []))[1].append((item.name, rep.passed, message))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_OUTCOMES, key=int):
        title, checks = _OUTCOMES[cid]
        ok = all(passed for _, passed, _ in checks)
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {cid}: {title}")
        for name, passed, message in checks:
            if not passed:
                tr.write_line(f"        {name}: {message}")
