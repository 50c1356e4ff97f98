import pytest

from choquard import ProblemParams, build_grid, build_kernel, solve_ground_state

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def newton_op_512():
    """Riesz operator for N=3, alpha=2 on the ground-state grid R=20, M=512."""
    grid = build_grid(20.0, 512, 3)
    return build_kernel(grid, 3, 2.0)


@pytest.fixture(scope="session")
def newton_params():
    return ProblemParams.power(3, 2, 2, 2)


@pytest.fixture(scope="session")
def ground_state_512(newton_op_512, newton_params):
    return solve_ground_state(newton_params, newton_op_512.grid, newton_op_512)


@pytest.fixture
def acceptance_line():
    """Record a one-line PASS/FAIL verdict that is echoed in the terminal summary."""

    def record(number, ok, text):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
