"""Reading the versioned hdgplasma CSV contract.

Every file starts with ``# hdgplasma-csv-1 config-sha256=<digest>``, then
a header row and comma-separated data rows.  Readers here validate the
version line and required columns and fail loudly on mismatch.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CSV_VERSION = "hdgplasma-csv-1"


class SchemaError(Exception):
    """Input file does not follow the expected CSV contract."""


def read_table(path, required=()):
    """Parse a CSV into a dict of numpy arrays (float where possible)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not lines or not lines[0].startswith(f"# {CSV_VERSION} config-sha256="):
        raise SchemaError(f"{path}: missing '{CSV_VERSION}' version header")
    if len(lines) < 3:
        raise SchemaError(f"{path}: no data rows")
    cols = lines[1].split(",")
    missing = [c for c in required if c not in cols]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing} (have {cols})")
    raw = {c: [] for c in cols}
    for ln, line in enumerate(lines[2:], start=3):
        toks = line.split(",")
        if len(toks) != len(cols):
            raise SchemaError(f"{path}:{ln}: expected {len(cols)} fields, "
                              f"got {len(toks)}")
        for c, tok in zip(cols, toks):
            raw[c].append(tok)

    out = {}
    for c, vals in raw.items():
        try:
            out[c] = np.array([float(v) for v in vals])
        except ValueError:
            out[c] = np.array(vals)
    return out
