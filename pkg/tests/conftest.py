import acceptance_results


def pytest_terminal_summary(terminalreporter):
    lines = acceptance_results.summary_lines()
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
