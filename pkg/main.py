#!/usr/bin/env python3
"""
Time Diffraction - sideband spectra of atoms bouncing on a vibrating evanescent mirror
Command-line entry point: closed-form weights, split-operator oracle and synthetic images
"""

import logging
import logging.config
import os
import sys
from typing import List, Optional

from handlers import TimeDiffractionHandlers

LOGGING_CONF = os.path.join(os.path.dirname(os.path.abspath(__file__)), "logging.conf")


def setup_logging():
    """Logs go to stderr so artifacts on stdout stay clean"""
    if os.path.exists(LOGGING_CONF):
        logging.config.fileConfig(LOGGING_CONF, disable_existing_loggers=False)
    else:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    level = os.getenv("LOG_LEVEL", "").upper()
    if level in logging.getLevelNamesMapping():
        logging.getLogger().setLevel(level)


# Configure logging
setup_logging()
logger = logging.getLogger(__name__)


class TimeDiffractionApp:
    def __init__(self):
        self.handlers = TimeDiffractionHandlers()

    def run(self, argv: Optional[List[str]] = None) -> int:
        argv = sys.argv[1:] if argv is None else argv
        try:
            return self.handlers.dispatch(argv)
        except KeyboardInterrupt:
            logger.info("🔄 Interrupted")
            return 130
        except Exception as e:
            logger.error(f"💥 Unexpected error: {e}")
            return 1


def main(argv: Optional[List[str]] = None) -> int:
    return TimeDiffractionApp().run(argv)


if __name__ == "__main__":
    sys.exit(main())
