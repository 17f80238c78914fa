import pytest
from hypothesis import HealthCheck, settings

from distner.model import configure_torch

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    print_blob=True,
)
settings.load_profile("suite")


@pytest.fixture(scope="session", autouse=True)
def single_thread_torch():
    """Keep every torch op on one thread so training results are replayable."""
    configure_torch(1)
