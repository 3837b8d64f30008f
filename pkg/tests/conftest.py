import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "gkploss",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("gkploss")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def criterion_report():
    """Record one verdict per acceptance criterion; printed at the end of the run."""

    def record(number: int, passed: bool, detail: str) -> None:
        _CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")
