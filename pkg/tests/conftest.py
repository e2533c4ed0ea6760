import pytest

from junctionflow.flux import make_quadratic
from junctionflow.germ import GermParams


@pytest.fixture
def m():
    return make_quadratic(1.0, 1.0)


@pytest.fixture
def half():
    return GermParams(0.5)


@pytest.fixture
def verdict(request):
    """Record a named pass/fail line; returns the verdict so tests can assert on it."""
    store = request.config.__dict__.setdefault("_acceptance", {})

    def record(name: str, ok: bool, detail: str) -> bool:
        store[name] = (bool(ok), detail)
        print(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = getattr(config, "_acceptance", None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(store, key=lambda s: int(s[1:])):
        ok, detail = store[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
