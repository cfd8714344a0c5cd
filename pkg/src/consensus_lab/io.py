"""CSV helpers shared by every module.

Floats are written with 17 significant digits so that a round trip through
the file is exact and two identical runs produce identical bytes.
"""

import csv
import os

import numpy as np

from .errors import OutputError


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v != v:
            return "nan"
        if v == 0.0:
            return "0"  # drop the sign of negative zero
        return "%.17g" % v
    return str(v)


def write_csv(path, header, rows):
    """Write ``rows`` (an iterable of sequences or a 2-D array) under ``header``."""
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(format_value(v) for v in row) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    """Return ``(header, data)`` with data as a float array (one row per line)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(x) for x in row] for row in reader]
    return header, np.array(data, dtype=float).reshape(len(data), len(header))
