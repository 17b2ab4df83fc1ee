import pytest

# closed forms must be validated before anything consumes them
_FIRST = ("test_oracles.py",)
_LAST = ("test_acceptance.py",)

ACCEPTANCE_LINES = []


def pytest_collection_modifyitems(session, config, items):
    def rank(item):
        name = item.fspath.basename
        if name in _FIRST:
            return 0
        if name in _LAST:
            return 2
        return 1

    items.sort(key=rank)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record
