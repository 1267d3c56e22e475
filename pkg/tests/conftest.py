import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")
    config.stash[_RESULTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    results = item.config.stash[_RESULTS]
    entry = results.setdefault(number, {"title": title, "ok": True, "seen": False, "detail": []})
    if report.when == "call":
        entry["seen"] = True
    if report.failed:
        entry["ok"] = False
    if report.when == "call":
        entry["detail"] += [str(v) for k, v in item.user_properties if k == "measured"]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        entry = results[number]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        detail = "; ".join(entry["detail"])
        terminalreporter.write_line(f"criterion {number:2d} {status}  {entry['title']}"
                                    + (f"  [{detail}]" if detail else ""))
