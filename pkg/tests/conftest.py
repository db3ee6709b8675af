import pytest

from app.logger import prepare_logger
from app.settings import settings


@pytest.fixture(autouse=True, scope="session")
def configured_logger() -> None:
    # bound once to the session-wide stderr, not to a per-test capsys buffer
    prepare_logger(settings.log_level)
