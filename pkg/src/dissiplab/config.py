"""Key-value run configuration.

Config files are flat `key = value` lines; `#` starts a comment.  Map
specification keys:

    family = henon | extension-quadratic | extension-arnold
    a = 1.4          # henon: a, b        (det Df = b)
    b = -0.1
    c = -1.5         # extension-quadratic: c, b, eps
    eps = 0.05
    omega = 0.3      # extension-arnold: a, omega, b, eps
    region = auto    # or: xmin xmax ymin ymax
    region_shrink = 1e-6
    seed = 1
    out = runs/demo

Remaining numeric keys are command parameters (n, burn, x0, y0, N, n_back,
sample_k, slack_up, slack_down, delta, budget, n_arcs, threads, ...).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .maps import ArnoldMap, Extension2D, HenonMap, QuadraticMap, TrappingRegion

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_config",
           "make_rng"]


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


@dataclass
class RunConfig:
    family: str
    raw: dict
    seed: int
    out: Path
    threads: int = 1

    def require(self, *keys):
        missing = [k for k in keys if k not in self.raw]
        if missing:
            raise ConfigError(f"missing config field(s): {', '.join(missing)}")

    def get_float(self, key, default=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError(f"missing config field: {key}")
            return float(default)
        try:
            return float(self.raw[key])
        except ValueError as e:
            raise ConfigError(f"field {key}: {e}") from None

    def get_int(self, key, default=None):
        return int(round(self.get_float(key, default)))

    def build_map(self):
        fam = self.family
        if fam == "henon":
            self.require("a", "b")
            return HenonMap(self.get_float("a"), self.get_float("b"))
        if fam == "extension-quadratic":
            self.require("c", "b", "eps")
            return Extension2D(QuadraticMap(self.get_float("c")),
                               self.get_float("b"), self.get_float("eps"))
        if fam == "extension-arnold":
            self.require("a", "omega", "b", "eps")
            return Extension2D(ArnoldMap(self.get_float("a"), self.get_float("omega")),
                               self.get_float("b"), self.get_float("eps"))
        raise ConfigError(f"unknown family {fam!r} (henon | extension-quadratic "
                          "| extension-arnold)")

    def build_region(self, m_map) -> TrappingRegion:
        spec = self.raw.get("region", "auto")
        if spec == "auto":
            shrink = self.get_float("region_shrink", 1e-6)
            if isinstance(m_map, HenonMap):
                return TrappingRegion.henon_standard(m_map.a, shrink=shrink)
            return m_map.standard_region()
        parts = spec.split()
        if len(parts) != 4:
            raise ConfigError("region must be 'auto' or 'xmin xmax ymin ymax'")
        try:
            vals = [float(v) for v in parts]
        except ValueError as e:
            raise ConfigError(f"region: {e}") from None
        return TrappingRegion(*vals)

    def config_hash(self) -> str:
        norm = json.dumps(self.raw, sort_keys=True)
        return hashlib.sha256(norm.encode()).hexdigest()[:16]


def load_config(path, overrides=None) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    raw = parse_config_text(p.read_text())
    if overrides:
        raw.update({k: str(v) for k, v in overrides.items() if v is not None})
    if "family" not in raw:
        raise ConfigError("missing config field: family")
    try:
        seed = int(raw.get("seed", "0"))
    except ValueError:
        raise ConfigError("seed must be an integer") from None
    out = Path(raw.get("out", "runs/out"))
    try:
        threads = int(raw.get("threads", "1"))
    except ValueError:
        raise ConfigError("threads must be an integer") from None
    return RunConfig(family=raw["family"], raw=raw, seed=seed, out=out,
                     threads=max(1, threads))


def make_rng(seed: int, stream: int = 0):
    """Counter-based generator: one 64-bit seed, per-stream keys."""
    key = (int(seed) + int(stream) * 0x9E3779B97F4A7C15) % (1 << 64)
    return np.random.Generator(np.random.Philox(key=key))
