import logging
import os
from typing import Optional, Union

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"
LOG_LEVEL_ENV = "TSBENCH_LOG_LEVEL"


def configure_logging(level: Optional[Union[str, int]] = None) -> None:
    """Root logging for the CLI; ``TSBENCH_LOG_LEVEL`` applies when no level is passed."""
    level = level or os.getenv(LOG_LEVEL_ENV, "INFO")
    if isinstance(level, str):
        level = level.upper()
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
