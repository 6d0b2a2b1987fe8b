"""Prints the acceptance summary (one line per criterion) after the run."""

ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("abcde")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
