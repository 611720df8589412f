import pytest

_results = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if report.failed and call.excinfo is not None:
        first = str(call.excinfo.value).strip().splitlines()
        detail = "; ".join(filter(None, [detail, first[0] if first else call.excinfo.typename]))
    _results.append((marker.args[0], report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _results:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
