"""Console logging for the command line tools."""
import logging
import re

from typing import Dict, Optional

try:
    from colorama import Fore, Style
except ImportError:
    Fore = Style = None


def _level_colors() -> Dict[int, str]:
    if Fore is None:
        return {}
    return {
        logging.DEBUG: Style.DIM,
        logging.INFO: Fore.GREEN,
        logging.WARNING: Fore.YELLOW + Style.BRIGHT,
        logging.ERROR: Fore.RED + Style.BRIGHT,
        logging.CRITICAL: Fore.RED + Style.BRIGHT,
    }


class ColoringFormatter(logging.Formatter):
    """
    Formats records with the timestamp, logger name and level colored by severity.

    Without colorama, or with ``use_color=False``, records are formatted plainly.
    Levels without a color fall back to the plain format.
    """

    def __init__(self, fmt: str, datefmt: Optional[str] = None, use_color: Optional[bool] = None):
        super().__init__(fmt, datefmt)
        if use_color is None:
            use_color = Fore is not None
        colors = _level_colors() if use_color else {}
        self._by_level = {level: logging.Formatter(self._paint(fmt, color), datefmt) for level, color in colors.items()}

    @staticmethod
    def _wrap(fmt: str, pattern: str, color: str) -> str:
        return re.sub("(" + pattern + ")", color + r"\1" + Style.RESET_ALL, fmt)

    def _paint(self, fmt: str, level_color: str) -> str:
        fmt = self._wrap(fmt, r"%\(asctime\)s", Fore.GREEN)
        fmt = self._wrap(fmt, r"%\(name\).*?s", Fore.BLUE)
        return self._wrap(fmt, r"%\(levelname\).*?s", level_color)

    def format(self, record: logging.LogRecord) -> str:
        formatter = self._by_level.get(record.levelno)
        if formatter is None:
            return super().format(record)
        return formatter.format(record)
