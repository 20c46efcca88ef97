import pytest

from throttleplan import Population, UserProfile


@pytest.fixture
def pop4():
    """Four always-on download users; the worked instance used throughout."""
    return Population(
        [
            UserProfile(0, 0.3, 1.0),
            UserProfile(1, 0.45, 1.0),
            UserProfile(2, 0.5, 1.0),
            UserProfile(3, 1.0, 1.0),
        ]
    )


@pytest.fixture
def stream3():
    """Three half-active streaming users."""
    return Population(
        [
            UserProfile(0, 1.0, 0.5),
            UserProfile(1, 0.8, 0.5),
            UserProfile(2, 0.4, 0.5),
        ]
    )
