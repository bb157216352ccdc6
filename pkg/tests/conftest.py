import pytest

from z2ursell.dec import BoxGeometry


@pytest.fixture(scope="session")
def box333():
    return BoxGeometry((3, 3, 3))


@pytest.fixture(scope="session")
def box2d():
    return BoxGeometry((3, 3))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
