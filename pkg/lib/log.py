"""
Logging setup for the command-line tools.

The library only creates module loggers; handlers are installed here, once,
by the CLI. Verbosity comes from SWARMGUARD_LOG_LEVEL.
"""

import logging
import os

LOG_LEVEL_ENV = "SWARMGUARD_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(default: str = "WARNING") -> int:
    """
    Install a stderr handler on the root logger.

    Returns:
        The numeric level that was applied
    """
    name = os.environ.get(LOG_LEVEL_ENV, default).upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.WARNING

    root = logging.getLogger()
    if not any(getattr(h, '_swarmguard', False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._swarmguard = True
        root.addHandler(handler)
    root.setLevel(level)
    return level
