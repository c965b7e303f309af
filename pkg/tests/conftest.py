import pytest

# verdict lines collected by test_acceptance, echoed after the run so the
# per-criterion outcome survives output capture
ACCEPTANCE_LOG: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LOG


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LOG:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
