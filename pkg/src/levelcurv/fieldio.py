"""Plain-text field files (``CRFIELD`` format)."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .domain import ConvexRing
from .errors import ArgError, FormatError
from .grid import Grid, ScalarField, build_mask

MAGIC = "CRFIELD"
VERSION = "1"


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.17g}"


def dumps_field(field: ScalarField) -> str:
    g = field.grid
    head = [MAGIC, VERSION, str(g.dim), *(str(int(c)) for c in g.shape)]
    geo = [*(_fmt(v) for v in g.origin), *(_fmt(v) for v in g.spacing), _fmt(field.time)]
    vals = field.values.ravel()
    ncol = g.shape[-1]
    rows = [" ".join(_fmt(v) for v in vals[k : k + ncol]) for k in range(0, vals.size, ncol)]
    return "\n".join([" ".join(head), " ".join(geo), *rows]) + "\n"


def write_field(field: ScalarField, path) -> Path:
    p = Path(path)
    p.write_text(dumps_field(field), encoding="utf-8")
    return p


def parse_field(text: str):
    """Parse field text into ``(grid, values, time)`` without a mask."""
    lines = text.splitlines()
    if len(lines) < 2:
        raise FormatError("field file needs a header and a geometry line")
    head = lines[0].split()
    if len(head) < 3 or head[0] != MAGIC or head[1] != VERSION:
        raise FormatError("bad field header")
    try:
        dim = int(head[2])
        shape = tuple(int(x) for x in head[3:])
    except ValueError as exc:
        raise FormatError(f"bad field header: {exc}") from None
    if dim not in (2, 3) or len(shape) != dim or min(shape) < 2:
        raise FormatError("header dimension and node counts disagree")
    try:
        geo = [float(x) for x in lines[1].split()]
    except ValueError as exc:
        raise FormatError(f"bad geometry line: {exc}") from None
    if len(geo) != 2 * dim + 1 or not all(math.isfinite(x) for x in geo):
        raise FormatError("geometry line needs origin, spacing and time")
    tokens = " ".join(lines[2:]).split()
    expected = int(np.prod(shape))
    if len(tokens) != expected:
        raise FormatError(f"expected {expected} values, found {len(tokens)}")
    vals = np.empty(expected)
    for k, tok in enumerate(tokens):
        if tok == "nan":
            vals[k] = np.nan
            continue
        try:
            v = float(tok)
        except ValueError:
            raise FormatError(f"bad value token {tok!r}") from None
        if not math.isfinite(v):
            raise FormatError(f"non-finite value {tok!r}")
        vals[k] = v
    try:
        grid = Grid(np.array(geo[:dim]), np.array(geo[dim : 2 * dim]), np.array(shape) - 1)
    except ArgError as exc:
        raise FormatError(f"bad grid: {exc}") from None
    return grid, vals.reshape(shape), geo[-1]


def loads_field(text: str, ring: ConvexRing, mask=None) -> ScalarField:
    """Rebuild a field; the mask comes from ``ring`` and must match the sentinels."""
    grid, vals, t = parse_field(text)
    if mask is None or not mask.grid.same_as(grid):
        mask = build_mask(grid, ring)
    if not np.array_equal(np.isnan(vals), mask.exterior):
        raise FormatError("nan sentinels do not match the ring's exterior nodes")
    return ScalarField(grid, mask, vals, t)


def read_field(path, ring: ConvexRing, mask=None) -> ScalarField:
    return loads_field(Path(path).read_text(encoding="utf-8"), ring, mask)


def snapshot_name(index: int, time: float) -> str:
    return f"u_{index:04d}_{time:.6f}.crf"
