"""Color utility functions for status lines on standard error"""
import sys

from backflow_lab import config
from backflow_lab.config import Colors


def _emit(text):
    print(text, file=sys.stderr, flush=True)


def print_success(message):
    """Print success message in green with checkmark"""
    _emit(Colors.success(message))


def print_error(message):
    """Print error message in red with X"""
    _emit(Colors.error(message))


def print_info(message):
    """Print info message in light blue"""
    _emit(f"{Colors.LIGHT_BLUE}{message}{Colors.RESET}")


def print_diagnostic(message):
    """Print diagnostic info in cyan (only when BACKFLOW_LAB_VERBOSE is set)"""
    if config.VERBOSE:
        _emit(Colors.diagnostic(message))


def format_number(value, digits=6):
    """Format a float in pink with a fixed number of significant digits"""
    if value is None:
        return Colors.number("n/a")
    return Colors.number(f"{value:.{digits}g}")
