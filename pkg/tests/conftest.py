"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_RESULTS: dict[str, list[tuple[bool, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        # an xfail counts as a failed criterion: the check ran and did not hold
        ok = rep.passed and not hasattr(rep, "wasxfail")
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        if hasattr(rep, "wasxfail"):
            detail = (detail + "; " if detail else "") + "known failure: " + str(rep.wasxfail)
        _RESULTS.setdefault(name, []).append((ok, f"{item.name}: {detail}" if detail else item.name))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, parts in _RESULTS.items():
        ok = all(p[0] for p in parts)
        terminalreporter.write_line(f"ACCEPTANCE [{'PASS' if ok else 'FAIL'}] {name}")
        for part_ok, text in parts:
            terminalreporter.write_line(f"    {'ok  ' if part_ok else 'FAIL'} {text}")
