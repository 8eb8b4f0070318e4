import mpmath
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def mp200():
    """200-digit mpmath context for oracle values."""
    with mpmath.workdps(200):
        yield mpmath.mp
