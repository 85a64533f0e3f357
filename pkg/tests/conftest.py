import pytest

# criterion number -> (title, status, seconds); filled by tests marked ``acceptance``
_acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    report = outcome.get_result()
    number, title = marker.args
    _, status, seconds = _acceptance.get(number, (title, "PASS", 0.0))
    # setup time counts too: module fixtures run the shared landscape builds
    if report.when != "teardown":
        seconds += call.duration
    if report.failed:
        status = "FAIL"
    _acceptance[number] = (title, status, seconds)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, status, seconds = _acceptance[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title} ({seconds:.2f} s)")
