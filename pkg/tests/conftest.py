"""Collects one summary line per acceptance criterion and prints them after the run."""

import pytest

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or (rep.when == "setup" and rep.skipped)):
        return
    detail = dict(item.user_properties).get("detail", "")
    if hasattr(rep, "wasxfail"):
        status = "FAIL (expected)"
    elif rep.skipped:
        status = "SKIP"
        detail = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
    else:
        status = "PASS" if rep.passed else "FAIL"
    item.config.stash[_CRITERIA].setdefault(marker.args[0], []).append((item.name, status, detail))


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_CRITERIA]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    order = ("FAIL", "FAIL (expected)", "SKIP", "PASS")
    for number in sorted(results):
        rows = results[number]
        status = min((s for _, s, _ in rows), key=order.index)
        detail = "; ".join(d for _, _, d in rows if d)
        terminalreporter.write_line(f"criterion {number:2d}  {status:15s} {detail}")
