"""Shared pytest wiring.

The acceptance tests append one line per criterion to ACCEPTANCE_LINES; the
terminal-summary hook prints them in a dedicated section at the end of the
run so a plain `pytest -v` shows the per-criterion verdicts.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
