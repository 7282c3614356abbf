import pytest


@pytest.fixture(autouse=True, scope="session")
def _oracle_cache(tmp_path_factory):
    # keep manufactured-data caches out of the home directory
    mp = pytest.MonkeyPatch()
    mp.setenv("NONLOCAL_CACHE_DIR", str(tmp_path_factory.mktemp("oracle_cache")))
    yield
    mp.undo()


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
