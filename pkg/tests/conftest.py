import pytest

from infoepi.model import Params

_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""

    def record(number, passed, detail):
        _ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def fig3_params():
    return Params(b1=1.5, b2=0.9, K=0.9, beta=6.0, gamma=0.8, eta=0.08, mu1=1.0, mu2=1.0, epsilon=0.01)


@pytest.fixture
def fig5_params():
    return Params(b1=1.5, b2=0.9, K=0.9, beta=7.0, gamma=0.8, eta=0.08, mu1=1.0, mu2=1.0, epsilon=0.01)
