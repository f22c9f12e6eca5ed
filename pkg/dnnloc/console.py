"""Colored status lines on stderr."""

import sys

from . import config

# Optional: color for Windows terminals
try:
    from colorama import init, Fore, Style
    init(autoreset=True)
    COLOR_STEP = Fore.CYAN
    COLOR_INFO = ""
    COLOR_OK = Fore.GREEN
    COLOR_WARN = Fore.YELLOW
    COLOR_ERROR = Fore.RED
    RESET = Style.RESET_ALL
except ImportError:
    COLOR_STEP = ""
    COLOR_INFO = ""
    COLOR_OK = ""
    COLOR_WARN = ""
    COLOR_ERROR = ""
    RESET = ""

_quiet = config.QUIET


def set_quiet(quiet: bool) -> None:
    global _quiet
    _quiet = quiet


def _emit(color: str, prefix: str, message: str, force: bool = False) -> None:
    if _quiet and not force:
        return
    print(f"{color}{prefix} {message}{RESET}", file=sys.stderr)


def step(message: str) -> None:
    _emit(COLOR_STEP, "🔍", message)


def info(message: str) -> None:
    _emit(COLOR_INFO, "  ", message)


def success(message: str) -> None:
    _emit(COLOR_OK, "✅", message)


def warn(message: str) -> None:
    _emit(COLOR_WARN, "⚠️ ", message)


def error(message: str) -> None:
    _emit(COLOR_ERROR, "❌", message, force=True)
