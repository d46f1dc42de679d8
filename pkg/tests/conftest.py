import pytest

ACCEPTANCE_KEY = pytest.StashKey[dict]()
ACCEPTANCE_COUNT = 11


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of a numbered acceptance criterion and return it."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number, title, passed, detail=""):
        flag = "PASS" if passed else "FAIL"
        lines[number] = f"{flag} criterion {number:2d} {title}: {detail}"
        print(lines[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[ACCEPTANCE_KEY]
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        terminalreporter.write_line(lines.get(n, f"FAIL criterion {n:2d} did not complete"))
