import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the one-line verdicts collected by the acceptance tests."""
    for name in ("test_acceptance", "tests.test_acceptance"):
        module = sys.modules.get(name)
        if module is not None and getattr(module, "RESULTS", None):
            terminalreporter.section("acceptance criteria")
            for line in module.RESULTS:
                terminalreporter.write_line(line)
            break
