import pytest

from skewadvect import assemble_operators, build_uniform_mesh, model_velocity


_ops_cache = {}


def operators(h, diagonal="up", degree=5):
    key = (h, diagonal, degree)
    if key not in _ops_cache:
        mesh = build_uniform_mesh(h, diagonal=diagonal)
        _ops_cache[key] = assemble_operators(mesh, model_velocity(), degree)
    return _ops_cache[key]


@pytest.fixture(scope="session")
def ops_coarse():
    return operators(0.25)


@pytest.fixture(scope="session")
def ops_small():
    return operators(0.1)


@pytest.fixture(scope="session")
def ops_mid():
    return operators(0.05)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
