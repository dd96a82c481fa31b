"""Utility helpers for backflow-lab"""
import math
import uuid
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime

from backflow_lab.config import SIGNIFICANT_DIGITS, THREADS


def generate_run_id():
    """Generate a short run id using UUID4."""
    return str(uuid.uuid4())[:8].upper()


def get_timestamp():
    """Get current timestamp in ISO format."""
    return datetime.now().isoformat()


def format_number(value, digits=SIGNIFICANT_DIGITS):
    """Format a number for CSV output.

    None becomes an empty field, booleans become 0/1, integers are written
    as-is and floats get `digits` significant digits.
    """
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    if value == 0.0:
        return "0"
    return f"{value:.{digits}g}"


def worker_count(requested=None):
    """Number of workers to use, capped by BACKFLOW_LAB_THREADS."""
    if requested is None:
        return THREADS
    return max(1, min(int(requested), THREADS))


def parallel_map(func, items, workers=None):
    """Map func over items, in order, on a thread pool when workers > 1."""
    items = list(items)
    workers = worker_count(workers)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))
