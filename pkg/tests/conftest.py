import pytest

_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def record_criterion(request):
    """Collect one summary line per acceptance criterion for the terminal report."""
    results = request.config.stash.setdefault(_RESULTS, [])

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        results.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(results):
            terminalreporter.write_line(line)
