import pytest

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when == "teardown":
        return
    entry = _results.setdefault(item.nodeid, {"name": marker.args[0], "outcome": "passed", "duration": 0.0})
    # shared fixtures are charged to the first criterion that needs them
    entry["duration"] += report.duration
    if not report.passed:
        entry["outcome"] = report.outcome
    entry["detail"] = dict(item.user_properties).get("detail", "")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for entry in _results.values():
        verdict = "PASS" if entry["outcome"] == "passed" else "FAIL"
        detail = f"  {entry['detail']}" if entry["detail"] else ""
        terminalreporter.write_line(f"{verdict}  {entry['name']}  ({entry['duration']:.2f}s){detail}")
