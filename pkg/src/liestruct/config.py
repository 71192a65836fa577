"""TOML structure configs.

Schema (every table optional except ``[chart]`` and ``[structure]``)::

    seed = 0

    [chart]
    n = 2
    k = 1
    n_base = 1            # base/fiber split for edge-type builtins

    [structure]
    builtin = "zero"      # or: frame = [["x1", "0"], ["0", "x1"]], name = "mine"

    [metric]
    kind = "identity"     # "identity" | "scaled" (with c = 4.0) | "rows"
    rows = [["1", "0"], ["0", "1"]]

    [sampling]
    n_interior = 32
    m_min = 4
    m_max = 24
    n_transverse = 3

    [geodesic]
    p = [0.5, 0.0]
    v = [-1.0, 0.0]
    T = 10.0
    dt = 1e-3
    normalize = true

    [probe.<name>]        # controlled | cvfe | lce | injectivity | volume | adjoint
    ...                   # keyword parameters of the probe, see the README

    [output]
    dir = "out"
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .algebroid import Algebroid, DimensionMismatchError, SamplingPlan, builtin, custom
from .chart import Chart
from .expr import ExprSyntaxError, UnknownIdentifierError
from .riemann import MetricOnA


class ConfigError(ValueError):
    pass


@dataclass
class StructureConfig:
    chart: Chart
    algebroid: Algebroid
    metric: MetricOnA
    seed: int = 0
    sampling: SamplingPlan = field(default_factory=SamplingPlan)
    geodesic: dict = field(default_factory=dict)
    probes: dict = field(default_factory=dict)
    dirac: dict = field(default_factory=dict)
    output_dir: str = "out"
    raw: dict = field(default_factory=dict)

    @property
    def sha256(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _table(d: dict, key: str) -> dict:
    v = d.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"[{key}] must be a table")
    return v


def from_dict(raw: dict) -> StructureConfig:
    try:
        return _build(raw)
    except ConfigError:
        raise
    except (ExprSyntaxError, UnknownIdentifierError, DimensionMismatchError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc


def _build(raw: dict) -> StructureConfig:
    ch = _table(raw, "chart")
    if "n" not in ch or "k" not in ch:
        raise ConfigError("[chart] needs n and k")
    chart = Chart(int(ch["n"]), int(ch["k"]), ch.get("n_base"))
    st = _table(raw, "structure")
    if "builtin" in st and "frame" in st:
        raise ConfigError("[structure] takes either builtin or frame, not both")
    if "builtin" in st:
        a = builtin(str(st["builtin"]), chart)
    elif "frame" in st:
        a = custom(chart, st["frame"], str(st.get("name", "custom")))
    else:
        raise ConfigError("[structure] needs builtin or frame")
    mt = _table(raw, "metric")
    kind = mt.get("kind", "rows" if "rows" in mt else "identity")
    if kind == "identity":
        G = MetricOnA.identity(a.rank)
    elif kind == "scaled":
        G = MetricOnA.scaled_identity(a.rank, float(mt["c"]))
    elif kind == "rows":
        G = MetricOnA.from_rows(mt["rows"])
    else:
        raise ConfigError(f"unknown metric kind {kind!r}")
    if G.rank != a.rank:
        raise ConfigError(f"metric is {G.rank}x{G.rank} but the frame has rank {a.rank}")
    sp = _table(raw, "sampling")
    seed = int(raw.get("seed", 0))
    sampling = SamplingPlan(
        n_interior=int(sp.get("n_interior", 32)),
        m_min=int(sp.get("m_min", 4)),
        m_max=int(sp.get("m_max", 24)),
        n_transverse=int(sp.get("n_transverse", 3)),
        seed=seed,
    )
    geo = dict(_table(raw, "geodesic"))
    if "dt" in geo and float(geo["dt"]) <= 0:
        raise ConfigError("geodesic dt must be positive")
    if "T" in geo and float(geo["T"]) < 0:
        raise ConfigError("geodesic T must be non-negative")
    return StructureConfig(
        chart=chart,
        algebroid=a,
        metric=G,
        seed=seed,
        sampling=sampling,
        geodesic=geo,
        probes=dict(_table(raw, "probe")),
        dirac=dict(_table(raw, "dirac")),
        output_dir=str(_table(raw, "output").get("dir", "out")),
        raw=raw,
    )


def load_config(path: "str | Path", overrides: dict[str, Any] | None = None) -> StructureConfig:
    """Parse a TOML config; ``overrides`` (e.g. seed, dt from the command line) are merged in first."""
    try:
        raw = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key == "dt":
            raw.setdefault("geodesic", {})["dt"] = val
        else:
            raw[key] = val
    return from_dict(raw)
