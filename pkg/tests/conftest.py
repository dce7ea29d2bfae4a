import pytest

from nestlab import PrecisionContext, QuadraticMap


@pytest.fixture
def ctx():
    return PrecisionContext()


@pytest.fixture
def qmap():
    def make(a, bits=256, tol=1e-40):
        return QuadraticMap(a, PrecisionContext(bits=bits, tol=tol))
    return make


VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
