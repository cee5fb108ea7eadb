"""Shared test configuration: hypothesis profiles and tiny helpers."""

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=120,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def announce(capsys):
    """Print a line that always reaches the terminal, even under capture.

    Used by the acceptance tests so every criterion leaves a visible
    PASS/FAIL line in the run log.
    """

    def _announce(line: str) -> None:
        with capsys.disabled():
            print(line, flush=True)

    return _announce
