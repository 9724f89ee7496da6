"""Experiment configuration: flat `key = value` text with units and a schema version.

Example::

    schema_version = 1
    domain = disk
    res = 128            # boundary segments
    alpha = 10           # 1/length^2
    delta = 0.5          # A as a fraction of |Omega|
    inits = default
    seed = 7

Seed splitting: the 64-bit `seed` feeds numpy's SeedSequence; the k-th bare
`random` entry of the init list (and the random members of `default`) get the
k-th 32-bit word of SeedSequence(seed).generate_state(n_random).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .mesh import Mesh, build_domain, dumbbell_area
from .optimizer import InitShape, default_inits

SCHEMA_VERSION = 1
OUTPUT_ENV = "MEMBRANE_OUTPUT_ROOT"

DOMAINS = ("disk", "ellipse", "rectangle", "square", "annulus", "dumbbell")

# key -> (type, unit/description comment)
_KEYS = {
    "schema_version": (int, "format version"),
    "domain": (str, "disk | ellipse | rectangle | square | annulus | dumbbell"),
    "a": (float, "length: ellipse semiaxis or annulus inner radius"),
    "b": (float, "length: ellipse semiaxis"),
    "width": (float, "length: rectangle width"),
    "height": (float, "length: rectangle height"),
    "h": (float, "length: dumbbell half handle width"),
    "n": (int, "rectangle subdivisions per side"),
    "res": (int, "boundary or angular segments"),
    "layers": (int, "annulus radial layers"),
    "refinements": (int, "uniform refinements with boundary snapping"),
    "alpha": (float, "1/length^2, potential height"),
    "A": (float, "length^2, measure of D"),
    "delta": (float, "dimensionless, A / |Omega|"),
    "eps": (float, "dimensionless, stop when |lambda_n - lambda_(n-1)| < eps"),
    "max_outer": (int, "outer iteration cap"),
    "inits": (str, "comma list of initial shapes or 'default'"),
    "seed": (int, "64-bit master seed"),
    "workers": (int, "parallel processes for multi-start"),
    "output_dir": (str, "artifact directory"),
}


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


@dataclass
class ExperimentConfig:
    domain: str = "disk"
    a: float | None = None
    b: float | None = None
    width: float | None = None
    height: float | None = None
    h: float | None = None
    n: int | None = None
    res: int | None = None
    layers: int | None = None
    refinements: int = 0
    alpha: float = 0.0
    A: float | None = None
    delta: float | None = None
    eps: float = 1e-8
    max_outer: int = 500
    inits: str = "boundary_ring"
    seed: int = 0
    workers: int = 1
    output_dir: str | None = None
    schema_version: int = SCHEMA_VERSION
    _line: dict = field(default_factory=dict, repr=False, compare=False)

    # -- domain --------------------------------------------------------------

    def domain_params(self) -> dict:
        d = self.domain
        if d == "disk":
            return {"kind": "ellipse", "a": 1.0, "b": 1.0, "res": self.res or 128}
        if d == "ellipse":
            return {"kind": "ellipse", "a": self.a or 1.0, "b": self.b or 1.0,
                    "res": self.res or 128}
        if d == "square":
            return {"kind": "rectangle", "width": 1.0, "height": 1.0, "n": self.n or 32}
        if d == "rectangle":
            return {"kind": "rectangle", "width": self.width or 1.0, "height": self.height or 1.0,
                    "n": self.n or 32}
        if d == "annulus":
            return {"kind": "annulus", "a": self.a or 1.0, "res": self.res or 256,
                    "layers": self.layers or 8}
        return {"kind": "dumbbell", "h": self.h if self.h is not None else 0.1,
                "res": self.res or 128}

    def build_mesh(self) -> Mesh:
        p = self.domain_params()
        kind = p.pop("kind")
        return build_domain(kind, refinements=self.refinements, **p)

    def nominal_area(self) -> float:
        """|Omega| of the exact (curved) domain, for reporting only."""
        p = self.domain_params()
        if p["kind"] == "ellipse":
            return math.pi * p["a"] * p["b"]
        if p["kind"] == "rectangle":
            return p["width"] * p["height"]
        if p["kind"] == "annulus":
            return math.pi * (2 * p["a"] + 1)
        return dumbbell_area(p["h"])

    def measure(self, mesh: Mesh) -> float:
        """A in absolute units; delta is taken relative to the mesh area."""
        if self.A is not None:
            return self.A
        return (self.delta if self.delta is not None else 0.5) * mesh.area

    # -- inits and seeds ------------------------------------------------------

    def init_shapes(self) -> list[InitShape]:
        tokens = [t.strip() for t in self.inits.split(",") if t.strip()]
        shapes: list[InitShape] = []
        bare_random = sum(t == "random" for t in tokens)
        words = iter(split_seed(self.seed, bare_random))
        for t in tokens:
            if t == "default":
                shapes += default_inits(self.seed)
            elif t == "random":
                shapes.append(InitShape("random", seed=int(next(words))))
            else:
                shapes.append(InitShape.parse(t))
        return shapes

    # -- validation and text -----------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        def bad(key, msg):
            raise ConfigError(f"{key}: {msg}", self._line.get(key))

        if self.schema_version != SCHEMA_VERSION:
            bad("schema_version", f"unsupported version {self.schema_version}")
        if self.domain not in DOMAINS:
            bad("domain", f"unknown domain {self.domain!r}")
        for k in ("a", "b", "width", "height"):
            v = getattr(self, k)
            if v is not None and not v > 0:
                bad(k, "must be positive")
        if self.h is not None and not 0 < self.h < 1:
            bad("h", "must lie in (0, 1)")
        if self.alpha < 0 or not math.isfinite(self.alpha):
            bad("alpha", "must be finite and >= 0")
        if self.A is not None and self.delta is not None:
            bad("A", "give A or delta, not both")
        if self.A is not None and self.A < 0:
            bad("A", "must be >= 0")
        if self.delta is not None and not 0 <= self.delta <= 1:
            bad("delta", "must lie in [0, 1]")
        if not self.eps > 0:
            bad("eps", "must be positive")
        for k in ("max_outer", "workers"):
            if getattr(self, k) < 1:
                bad(k, "must be >= 1")
        if self.refinements < 0:
            bad("refinements", "must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            bad("seed", "must be a 64-bit unsigned integer")
        try:
            self.init_shapes()
        except (ValueError, IndexError) as exc:
            bad("inits", str(exc))
        return self

    def to_text(self) -> str:
        out = []
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            text = repr(v) if isinstance(v, float) else str(v)
            out.append(f"{f.name} = {text}  # {_KEYS[f.name][1]}")
        out.sort(key=lambda ln: ln.split()[0] != "schema_version")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values, lines = {}, {}
        for no, raw in enumerate(text.splitlines(), start=1):
            body = raw.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
            key, val = (s.strip() for s in body.split("=", 1))
            if key not in _KEYS:
                raise ConfigError(f"unknown key {key!r}", no)
            if key in values:
                raise ConfigError(f"duplicate key {key!r}", no)
            typ = _KEYS[key][0]
            try:
                values[key] = typ(val) if typ is not int else int(val, 0)
            except ValueError:
                raise ConfigError(f"{key}: cannot read {val!r} as {typ.__name__}", no) from None
            lines[key] = no
        if "schema_version" not in values:
            raise ConfigError("missing schema_version", 1)
        cfg = cls(**values)
        cfg._line = lines
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    def run_name(self) -> str:
        A = f"A{self.A:g}" if self.A is not None else f"d{self.delta if self.delta is not None else 0.5:g}"
        return f"{self.domain}_a{self.alpha:g}_{A}_s{self.seed}"

    def resolve_output(self, override: str | None = None) -> Path:
        if override:
            return Path(override)
        if self.output_dir:
            return Path(self.output_dir)
        return output_root() / self.run_name()


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def split_seed(seed: int, k: int) -> list[int]:
    if k <= 0:
        return []
    return [int(w) for w in np.random.SeedSequence(seed).generate_state(k)]
