"""Deterministic text artifacts: CSV with exact floats, tiny JSON helpers.

Floats are printed with %.17g so every float64 round-trips exactly and
repeated runs produce byte-identical files.
"""

from __future__ import annotations

import json


def fmt(value):
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")
