"""Deterministic text and JSON-lines rendering of result tables.

Float formatting is fixed per column so that output is byte-stable for a
given input: finesse as integers, cooperativity with 4 significant digits.
"""
from __future__ import annotations

import json
import math
from typing import Callable, Optional, Sequence

from .cqed import ReportRow
from .optics import FLAT

FORMATS = ("text", "records")
MISSING = "-"


def sig(x, digits=4):
    """Fixed significant-digit formatting; ``-`` for missing values."""
    if x is None:
        return MISSING
    if x is FLAT:
        return "flat"
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return f"{x:.{digits}g}"


def sig4(x):
    """Exactly 4 significant digits, trailing zeros kept."""
    if x is None or x is FLAT or not math.isfinite(x):
        return sig(x)
    return f"{x:#.4g}".rstrip(".")


def integer(x):
    if x is None:
        return MISSING
    return f"{x:.0f}"


def scaled(factor, fmt=sig):
    def f(x):
        if x is None or x is FLAT:
            return fmt(x)
        return fmt(x / factor)
    return f


# (header, record key, attribute getter, text formatter)
Column = tuple[str, str, Callable, Callable]


def render_text(columns: Sequence[Column], rows: Sequence, title: str = "",
                notes: Sequence[str] = ()) -> str:
    """Right-aligned plain-text table. Empty ``rows`` gives the header only."""
    headers = [c[0] for c in columns]
    cells = [[c[3](c[2](r)) for c in columns] for r in rows]
    widths = [max([len(h)] + [len(row[i]) for row in cells]) for i, h in enumerate(headers)]
    lines = []
    if title:
        lines.append(f"# {title}")
    lines.append("  ".join(h.rjust(w) for h, w in zip(headers, widths)))
    for row in cells:
        lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    lines.extend(notes)
    return "\n".join(lines) + "\n"


def _jsonable(v):
    if v is FLAT:
        return "flat"
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if hasattr(v, "item"):
        return v.item()
    return v


def render_records(columns: Sequence[Column], rows: Sequence, extra: Optional[Callable] = None) -> str:
    """One JSON object per row, keys in column order, values in SI units."""
    out = []
    for r in rows:
        rec = {c[1]: _jsonable(c[2](r)) for c in columns}
        if extra is not None:
            rec.update({k: _jsonable(v) for k, v in extra(r).items()})
        out.append(json.dumps(rec, sort_keys=False, allow_nan=False))
    return "".join(line + "\n" for line in out)


def _check_format(fmt):
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")


SUMMARY_COLUMNS: list[Column] = [
    ("RoC(mm)", "roc_m", lambda r: r.roc, scaled(1e-3)),
    ("L(mm)", "length_m", lambda r: r.length, scaled(1e-3)),
    ("T(ppm)", "transmission", lambda r: r.transmission, scaled(1e-6, integer)),
    ("F_expected", "finesse_expected", lambda r: r.finesse_expected, integer),
    ("F_obtained", "finesse_obtained", lambda r: r.finesse_obtained, integer),
    ("eta", "cooperativity", lambda r: r.cooperativity, sig4),
]


def emit_report(rows: Sequence[ReportRow], fmt: str = "text") -> bytes:
    """Render cavity summary rows as an aligned table or JSON lines.

    Rows carrying an error are listed with blank figures and the error is
    appended below the table (text) or as an ``error`` field (records).
    """
    _check_format(fmt)
    if fmt == "records":
        return render_records(SUMMARY_COLUMNS, rows,
                              extra=lambda r: {"name": r.name, "error": r.error}).encode()
    notes = [f"! {r.name or f'row {i + 1}'}: {r.error}" for i, r in enumerate(rows) if r.error]
    return render_text(SUMMARY_COLUMNS, rows, "Summary of cavities", notes).encode()
