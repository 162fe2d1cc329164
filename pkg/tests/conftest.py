import pytest

_verdicts = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    n = marker.args[0]
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if getattr(report, "wasxfail", None):
        detail += f" [known failure: {report.wasxfail.removeprefix('reason: ')}]"
    ok = report.passed and _verdicts.get(n, True)
    _verdicts[n] = ok
    item.config._acceptance = getattr(item.config, "_acceptance", {})
    item.config._acceptance[n] = (ok, detail)


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        ok, detail = lines[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
