import pytest

_CRITERIA: list[tuple[str, str, str]] = []


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run long simulations (hours)")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, label): acceptance criterion covered by a test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="long run; enable with --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        if report.when == "setup" and report.skipped and "criterion" in report.keywords:
            _CRITERIA.append((report.nodeid.split("::")[-1], "SKIP", "long run not enabled"))
        return
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    _CRITERIA.append((props["criterion"], status, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in _CRITERIA:
        terminalreporter.write_line(f"{status:4s}  {label}" + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def criterion(record_property):
    """Label a test as an acceptance criterion and attach measured values."""

    def mark(label: str, **values):
        record_property("criterion", label)
        record_property("detail", ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items()))

    return mark
