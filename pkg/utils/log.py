"""
QSDA: Console Logging
Bracket-tagged, colored log lines on stderr. Level comes from SDA_LOG.
"""

import logging
import sys

from colorama import Fore, Style, init as colorama_init

from config import LOG_LEVEL

_TAGS = {
    logging.DEBUG: ("DEBUG", Style.DIM),
    logging.INFO: ("INFO", Fore.CYAN),
    logging.WARNING: ("WARN", Fore.YELLOW),
    logging.ERROR: ("ERROR", Fore.RED),
    logging.CRITICAL: ("FATAL", Fore.RED + Style.BRIGHT),
}

_configured = False


class TagFormatter(logging.Formatter):
    """Formats records as `[TAG] message`, optionally colored."""

    def __init__(self, color: bool = True):
        super().__init__()
        self.color = color

    def format(self, record: logging.LogRecord) -> str:
        tag, color = _TAGS.get(record.levelno, (record.levelname, ""))
        message = record.getMessage()
        if record.exc_info:
            message = f"{message}\n{self.formatException(record.exc_info)}"
        if self.color:
            return f"{color}[{tag}]{Style.RESET_ALL} {message}"
        return f"[{tag}] {message}"


def configure(level: str | int | None = None) -> None:
    """Install the stderr handler on the package root logger (idempotent)."""
    global _configured
    root = logging.getLogger("qsda")
    if not _configured:
        colorama_init()
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(TagFormatter(color=sys.stderr.isatty()))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    root.setLevel(level if level is not None else LOG_LEVEL)


def get_logger(name: str) -> logging.Logger:
    """Module logger under the `qsda` namespace."""
    if not _configured:
        configure()
    return logging.getLogger(f"qsda.{name}")
