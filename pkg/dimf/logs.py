import logging
import os

import dotenv
from rich.logging import RichHandler

LOG_ENV_VAR = "SBRIDGE_LOG"
DEFAULT_LEVEL = "WARNING"


def configure_logging(level: str | None = None) -> int:
    """
    Install a single rich handler on the root logger.

    Args:
        level: Explicit level name; falls back to $SBRIDGE_LOG, then WARNING

    Returns:
        The numeric level that was applied
    """
    # Pick up SBRIDGE_LOG from a .env file if present
    dotenv.load_dotenv()

    name = (level or os.getenv(LOG_ENV_VAR) or DEFAULT_LEVEL).upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        numeric = logging.WARNING

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    root.addHandler(RichHandler(rich_tracebacks=True, show_path=False))
    root.setLevel(numeric)
    return numeric
