"""Scenario configuration files (``key = value`` under ``[section]`` headers)."""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import ConvexRing, parse_body
from .errors import ConfigError, LevelcurvError
from .operators import OperatorSpec
from .solver import INITIAL_KINDS, Scenario
from .verify import AnalysisOptions, default_levels

SCHEMA: dict[str, tuple[str, ...]] = {
    "domain": ("outer", "inner"),
    "grid": ("resolution",),
    "operator": ("kind", "matrix", "beta"),
    "solve": ("t_end", "cfl_factor", "snapshot_every", "steady_tol", "initial"),
    "analyze": ("levels", "rank_tol", "gradient_floor", "corner_exclusion", "min_samples",
                "defect_tol", "psd_tol", "sampling"),
    "bound": ("level_lo", "level_hi", "a_max", "fit_tol", "eq_tol", "eta_grid"),
}
REQUIRED = {"domain": ("outer", "inner"), "grid": ("resolution",)}


@dataclass
class Config:
    scenario: Scenario
    options: AnalysisOptions
    path: Path | None = None
    raw: dict = field(default_factory=dict)

    @property
    def base_dir(self) -> Path:
        return self.path.parent if self.path else Path.cwd()

    def resolve(self, p) -> Path:
        q = Path(p)
        return q if q.is_absolute() else (self.base_dir / q)

    def describe(self) -> dict:
        sc = self.scenario
        return {
            "ring": sc.ring.describe(),
            "resolution": sc.resolution,
            "operator": sc.operator.to_dict(),
            "initial": sc.initial,
            "t_end": sc.t_end,
            "cfl_factor": sc.cfl_factor,
            "snapshot_every": sc.snapshot_every,
            "steady_tol": sc.steady_tol,
        }


class _Locator:
    """Line numbers of sections and keys in the raw text."""

    def __init__(self, text: str):
        self.sections: dict[str, int] = {}
        self.keys: dict[tuple[str, str], int] = {}
        current = None
        for no, line in enumerate(text.splitlines(), start=1):
            s = line.strip()
            if not s or s[0] in "#;":
                continue
            m = re.match(r"\[([^\]]+)\]", s)
            if m:
                current = m.group(1).strip()
                self.sections.setdefault(current, no)
                continue
            m = re.match(r"([^=:]+)[=:]", s)
            if m and current is not None:
                self.keys.setdefault((current, m.group(1).strip().lower()), no)

    def line(self, section: str, key: str | None = None) -> int | None:
        if key is not None and (section, key) in self.keys:
            return self.keys[(section, key)]
        return self.sections.get(section)


def _unquote(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def _numbers(text: str) -> list[float]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return [float(p) for p in parts]


def loads_config(text: str, path: Path | None = None) -> Config:
    loc = _Locator(text)
    where = str(path) if path else None
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=where or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", exc.lineno, where) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1] if hasattr(exc, "message") else str(exc),
                          getattr(exc, "lineno", None), where) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("unparsable line", lineno, where) from None

    raw: dict[str, dict[str, str]] = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", loc.line(sec), where)
        raw[sec] = {}
        for key, val in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}", loc.line(sec, key), where)
            raw[sec][key] = _unquote(val)
    for sec, keys in REQUIRED.items():
        for key in keys:
            if key not in raw.get(sec, {}):
                raise ConfigError(f"missing required key {sec}.{key}", loc.line(sec), where)

    def get(sec, key, conv, default):
        if key not in raw.get(sec, {}):
            return default
        text = raw[sec][key]
        try:
            val = conv(text)
        except (ValueError, LevelcurvError) as exc:
            raise ConfigError(f"bad value for {sec}.{key}: {exc}", loc.line(sec, key), where) from None
        return val

    def positive(conv):
        def f(text):
            v = conv(text)
            if not v > 0 or (isinstance(v, float) and not math.isfinite(v)):
                raise ValueError(f"{text!r} is not a positive number")
            return v
        return f

    def nonneg(text):
        v = float(text)
        if not (v >= 0 and math.isfinite(v)):
            raise ValueError(f"{text!r} is not a nonnegative number")
        return v

    def integer(text):
        v = float(text)
        if v != int(v):
            raise ValueError(f"{text!r} is not an integer")
        return int(v)

    outer = get("domain", "outer", parse_body, None)
    inner = get("domain", "inner", parse_body, None)
    try:
        ring = ConvexRing(outer, inner)
    except LevelcurvError as exc:
        raise ConfigError(str(exc), loc.line("domain"), where) from None
    resolution = get("grid", "resolution", positive(integer), None)
    if resolution < 8:
        raise ConfigError("grid.resolution must be at least 8", loc.line("grid", "resolution"), where)

    def kind_of(text):
        k = text.strip().upper()
        if k not in ("HEAT", "LINEAR", "GRAD_AUGMENTED"):
            raise ValueError(f"unknown operator kind {text!r}")
        return k

    kind = get("operator", "kind", kind_of, "HEAT")
    matrix = get("operator", "matrix", _numbers, None)
    beta = get("operator", "beta", float, 0.0)
    try:
        if kind == "HEAT":
            if matrix is not None:
                raise ValueError("HEAT takes no matrix")
            spec = OperatorSpec.heat() if beta == 0 else None
            if spec is None:
                raise ValueError("HEAT takes no beta")
        else:
            n = ring.dim
            if matrix is None:
                matrix = list(np.eye(n).ravel())
            if len(matrix) != n * n:
                raise ValueError(f"matrix needs {n * n} entries")
            m = np.array(matrix).reshape(n, n)
            spec = OperatorSpec.linear(m) if kind == "LINEAR" else OperatorSpec.grad_augmented(m, beta)
    except (ValueError, LevelcurvError) as exc:
        raise ConfigError(str(exc), loc.line("operator"), where) from None

    def initial_of(text):
        k = text.strip().lower()
        if k not in INITIAL_KINDS:
            raise ValueError(f"unknown initial kind {text!r}")
        return k

    try:
        scenario = Scenario(
            ring=ring,
            resolution=resolution,
            operator=spec,
            initial=get("solve", "initial", initial_of, "gauge"),
            t_end=get("solve", "t_end", nonneg, 1.0),
            cfl_factor=get("solve", "cfl_factor", positive(float), 0.9),
            snapshot_every=get("solve", "snapshot_every", positive(float), 0.1),
            steady_tol=get("solve", "steady_tol", positive(float), 1e-8),
        )
    except LevelcurvError as exc:
        raise ConfigError(str(exc), loc.line("solve"), where) from None
    if scenario.initial == "radial" and not ring.is_concentric_balls():
        raise ConfigError("radial initial data needs concentric balls", loc.line("solve", "initial"), where)

    level_lo = get("bound", "level_lo", float, 0.02)
    level_hi = get("bound", "level_hi", float, 0.98)
    if not 0 < level_lo < level_hi < 1:
        raise ConfigError("need 0 < level_lo < level_hi < 1", loc.line("bound"), where)

    def levels_of(text):
        vals = _numbers(text)
        if len(vals) == 1 and vals[0] == int(vals[0]) and vals[0] >= 2:
            return default_levels(level_lo, level_hi, int(vals[0]))
        if any(not 0 < v < 1 for v in vals) or any(np.diff(vals) <= 0):
            raise ValueError("levels must ascend strictly inside (0, 1)")
        return vals

    def eta_of(text):
        if text.strip().lower() == "auto":
            return None
        vals = _numbers(text)
        if len(vals) < 2 or vals[0] != 0 or any(np.diff(vals) <= 0):
            raise ValueError("eta grid must ascend from 0")
        return vals

    opts = AnalysisOptions(
        levels=get("analyze", "levels", levels_of, default_levels(level_lo, level_hi)),
        rank_tol=get("analyze", "rank_tol", positive(float), 1e-6),
        gradient_floor=get("analyze", "gradient_floor", positive(float), 1e-8),
        corner_exclusion=get("analyze", "corner_exclusion", nonneg, 3.0),
        min_samples=get("analyze", "min_samples", positive(integer), 64),
        defect_tol=get("analyze", "defect_tol", positive(float), 5.0),
        psd_tol=get("analyze", "psd_tol", positive(float), 1e-6),
        sampling=get("analyze", "sampling", positive(integer), 32),
        level_lo=level_lo,
        level_hi=level_hi,
        a_max=get("bound", "a_max", positive(float), 10.0),
        fit_tol=get("bound", "fit_tol", nonneg, 1e-3),
        eq_tol=get("bound", "eq_tol", positive(float), 0.03),
        eta_grid=get("bound", "eta_grid", eta_of, None),
    )
    return Config(scenario, opts, path, raw)


def load_config(path) -> Config:
    p = Path(path).resolve()
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from None
    return loads_config(text, p)
