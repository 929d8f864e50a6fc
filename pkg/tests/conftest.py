_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for name, value in report.user_properties:
        if name == "acceptance":
            _ACCEPTANCE.append(("PASS" if report.passed else "FAIL", value))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for verdict, line in _ACCEPTANCE:
        terminalreporter.write_line(f"{verdict}  {line}")
