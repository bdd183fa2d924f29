"""Logging for ptshell runs: a single stderr handler on the root logger."""
import logging
from typing import Union

from ptshell.exceptions import PtshellValueError

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s - %(message)s"
HANDLER_NAME = "ptshell-stderr"


def setup(level: Union[str, int] = logging.INFO) -> None:
    """Send log records, and Python warnings, to stderr.

    Calling it again replaces the handler instead of adding a second one.

    Args:
        level (Union[str, int], optional): Logging level to set. Defaults to logging.INFO.

    Raises:
        PtshellValueError: (indirect) if level is not valid.
    """
    _check_level(level)
    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        if handler.get_name() == HANDLER_NAME:
            root_logger.removeHandler(handler)
    stderr_handler = logging.StreamHandler()
    stderr_handler.set_name(HANDLER_NAME)
    stderr_handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT))
    root_logger.addHandler(stderr_handler)
    root_logger.setLevel(level)
    # scipy reports ill-conditioned factorizations through warnings.
    logging.captureWarnings(True)


def _check_level(level: Union[str, int]) -> None:
    """Validate logging level.

    Raises:
        PtshellValueError: if level is not valid.
    """
    # getLevelName maps known names to ints and anything else to "Level %s".
    ret: Union[str, int] = logging.getLevelName(level)
    if isinstance(ret, int):
        return
    if ret.startswith("Level "):
        raise PtshellValueError(f"Invalid logging level '{level}'")
