import sys

import pytest

from sdglab.pde import IsaacsSolver
from sdglab.presets import analytic_interval_problem, holder_game, two_action_game


@pytest.fixture(scope="session")
def analytic_problem():
    return analytic_interval_problem()


@pytest.fixture(scope="session")
def game_problem():
    return two_action_game()


@pytest.fixture(scope="session")
def holder_problem():
    return holder_game()


@pytest.fixture(scope="session")
def solved_analytic(analytic_problem):
    return IsaacsSolver(h=1 / 128).fit(analytic_problem)


@pytest.fixture(scope="session")
def solved_game(game_problem):
    return IsaacsSolver(h=1 / 128).fit(game_problem)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
