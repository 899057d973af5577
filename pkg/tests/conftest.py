import pytest

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture
def verdict(request):
    """Record a PASS/FAIL line for an acceptance criterion; printed in the terminal summary."""
    store = request.config.stash[_VERDICTS]

    def record(number: int, ok: bool, detail: str) -> bool:
        store[number] = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
        print(store[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
