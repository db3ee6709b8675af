import sys

import structlog

from app.cli import main

logger = structlog.get_logger(__name__)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Interrupted via keyboard interrupt")
        sys.exit(130)
