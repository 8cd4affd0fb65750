"""Shared pytest hooks.

test_acceptance registers one line per shipping criterion; they are echoed
in a summary block after the normal test report so a piped run still shows
the per-criterion verdicts.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
