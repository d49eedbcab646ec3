import logging
import sys

import pytest
from loguru import logger


@pytest.fixture(autouse=True)
def reset_logger():
    """Reset loguru before and after each test; CLI runs bind handlers to captured streams."""
    logger.remove()
    logger.add(sys.stderr, level="WARNING")
    yield
    logger.remove()
    logger.add(sys.stderr, level="WARNING")


@pytest.fixture
def loguru_caplog(caplog):
    """Forward loguru records to the standard logging module so caplog sees them."""
    handler_id = logger.add(
        lambda msg: logging.getLogger("loguru").info(msg), format="{level} {message}", level="DEBUG"
    )
    caplog.set_level(logging.INFO, logger="loguru")
    yield caplog
    logger.remove(handler_id)
