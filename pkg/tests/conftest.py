import pytest

from asepdist.contour import plan_contours
from asepdist.model import ModelParams


@pytest.fixture(scope="session")
def params():
    return ModelParams(0.3)


@pytest.fixture(scope="session")
def plan(params):
    return plan_contours(params)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for an acceptance criterion, shown in the terminal summary."""
    store = request.config.stash.setdefault(_VERDICTS, [])

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
        store.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
