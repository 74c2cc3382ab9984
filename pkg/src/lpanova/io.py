"""Dataset ingestion and result serialization."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, is_dataclass

import numpy as np

from . import __version__
from .errors import InputError
from .lpfit import Dataset
from .vcm import VcmDataset


def fmt17(v) -> str:
    """Float with 17 significant digits (exact round trip)."""
    if v is None:
        return ""
    return format(float(v), ".17g")


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_table(path, header="auto"):
    """Parse a numeric CSV.

    Returns ``(column_names or None, rows, line_numbers)``.  ``header`` is
    ``True``, ``False`` or ``"auto"`` (header iff the first row is not all
    numeric).  Lines starting with ``#`` and blank lines are ignored.
    """
    if not os.path.exists(path):
        raise InputError(f"input file not found: {path}")
    names, rows, lines = None, [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec) or rec[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in rec]
            if names is None and not rows and header is not False:
                if header is True or not all(_is_number(c) for c in cells):
                    names = cells
                    width = len(cells)
                    continue
            if width is None:
                width = len(cells)
            if len(cells) != width:
                raise InputError(f"{path}: line {lineno}: expected {width} columns, found {len(cells)}")
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                raise InputError(f"{path}: line {lineno}: malformed number in {rec!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}: line {lineno}: non-finite value")
            rows.append(vals)
            lines.append(lineno)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return names, np.array(rows, dtype=float), lines


def load_csv(path, header="auto", vcm=False):
    """Load ``x,y`` (two columns) or, with ``vcm``, ``u, x2..xd, y``.

    The intercept column of a VCM is injected, not read.  Returns
    ``Dataset`` or ``VcmDataset``.
    """
    _, data, _ = read_table(path, header)
    ncol = data.shape[1]
    if vcm:
        if ncol < 2:
            raise InputError(f"{path}: VCM input needs columns u, [x2..xd,] y (found {ncol})")
        return VcmDataset.from_covariates(data[:, 0], data[:, 1:-1], data[:, -1])
    if ncol != 2:
        raise InputError(f"{path}: expected 2 columns (x, y), found {ncol}")
    return Dataset(data[:, 0], data[:, 1])


def write_dataset(data, path, header=True):
    """Write a ``Dataset`` as ``x,y`` rows with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(["x", "y"])
        for xi, yi in zip(data.x, data.y):
            w.writerow([fmt17(xi), fmt17(yi)])


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if hasattr(obj, "name") and hasattr(obj, "radius"):
        return obj.name
    return obj


def to_json(obj) -> str:
    """JSON with non-finite floats as strings; floats keep full precision."""
    return json.dumps(_plain(obj), indent=2)


def provenance(command, config: dict, seed=None) -> dict:
    return {"tool": "lpanova", "version": __version__, "command": command,
            "config": _plain(config), "seed": seed}


def provenance_lines(prov: dict):
    """Header comment lines for CSV outputs."""
    return [f"{k}: {json.dumps(_plain(v), sort_keys=True)}" for k, v in prov.items()]


def write_rows(fh, columns, rows, header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh)
    w.writerow(columns)
    for r in rows:
        w.writerow([c if isinstance(c, str) else fmt17(c) for c in r])
