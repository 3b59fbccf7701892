"""Collects acceptance results and prints one pass/fail line per criterion."""

_ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "PASS" if report.passed else "FAIL"
        _ACCEPTANCE.append((props["criterion"], outcome, props.get("measured", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, measured in _ACCEPTANCE:
        line = f"{outcome}  {name}"
        if measured:
            line += f"  [{measured}]"
        terminalreporter.write_line(line)
