import pytest

from privmkt import MarketParams, RiskDistribution, solve_theorem1


@pytest.fixture
def table1():
    return MarketParams.table1(t=0.7, eps_bar=5.0)


@pytest.fixture
def uniform5():
    return RiskDistribution.uniform(5.0)


@pytest.fixture
def tn5():
    return RiskDistribution.truncated_normal(5.0, 1.0)


@pytest.fixture
def thm1(table1):
    return solve_theorem1(table1)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""
    def _report(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
