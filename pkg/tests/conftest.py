import acceptance_log


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.PARTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_log.lines():
        terminalreporter.write_line(line)
