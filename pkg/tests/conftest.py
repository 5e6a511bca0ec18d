from . import test_acceptance


def pytest_terminal_summary(terminalreporter):
    lines = test_acceptance.REPORT
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
