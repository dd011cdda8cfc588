"""
Logging configuration
"""
import logging
import os
import sys
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logger(name: Optional[str] = None, level: Optional[str] = None) -> logging.Logger:
    """
    Configure logging for the application

    Results go to stdout, so log records are written to stderr.
    """
    level_name = (level or os.getenv("CQI_LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        handlers=[
            logging.StreamHandler(sys.stderr)
        ],
        format=LOG_FORMAT
    )
    logger = logging.getLogger(name or "ineqplan")
    if level:
        logger.setLevel(level_name)
    return logger
