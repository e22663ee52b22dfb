"""Run configuration read from flat INI files.

Sections and keys (all optional; unknown sections or keys are rejected)::

    [problem]
    case = example1            ; example1 (circle) or example2 (flower)
    alpha0 = 10
    alpha1 = 1

    [discretization]
    degrees = 1, 2, 3
    h = 1/10, 1/20, 1/40       ; square side of the background mesh
    mu = default               ; number, or "default" for the degree table
    threshold = default        ; patch size, or "default"
    depth = default            ; interface subdivision depth, or "default"

    [solver]
    method = mg2               ; cg, mg1, mg2 or a0 (exact A_0 factorization)
    tol = 1e-8
    max_iter = 3000
    coarse_n = 10              ; cells per side of the coarsest multigrid level
    cycle = W
    inner = alpha              ; alpha or euclidean
    backend = auto             ; auto, cython or python

    [sweep]
    alpha0_values = 1, 10, 1e4
    thresholds = 5, 6, 7, 8, 9, 10
    lambda_degree = 1
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "parse_config", "mesh_cells"]

_KEYS = {
    "problem": {"case", "alpha0", "alpha1"},
    "discretization": {"degrees", "h", "mu", "threshold", "depth"},
    "solver": {"method", "tol", "max_iter", "coarse_n", "cycle", "inner", "backend"},
    "sweep": {"alpha0_values", "thresholds", "lambda_degree"},
}
METHODS = ("cg", "mg1", "mg2", "a0")


@dataclass
class RunConfig:
    case: str = "example1"
    alpha0: float = 10.0
    alpha1: float = 1.0
    degrees: tuple = (1, 2, 3)
    hs: tuple = (Fraction(1, 10), Fraction(1, 20), Fraction(1, 40))
    mu: float | None = None
    threshold: int | None = None
    depth: int | None = None
    method: str = "mg2"
    tol: float = 1e-8
    max_iter: int = 3000
    coarse_n: int = 10
    cycle: str = "W"
    inner: str = "alpha"
    backend: str | None = None
    alpha0_values: tuple = (1.0, 10.0, 1e4)
    thresholds: tuple = (5, 6, 7, 8, 9, 10)
    lambda_degree: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.case not in ("example1", "example2"):
            raise ConfigError(f"unknown case {self.case!r}")
        if self.alpha0 <= 0 or self.alpha1 <= 0:
            raise ConfigError("coefficients must be positive")
        if any(a <= 0 for a in self.alpha0_values):
            raise ConfigError("alpha0_values must be positive")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if any(m < 0 for m in self.degrees) or self.lambda_degree < 0:
            raise ConfigError("degrees must be nonnegative")
        if self.mu is not None and self.mu <= 0:
            raise ConfigError("mu must be positive")
        if self.coarse_n < 1:
            raise ConfigError("coarse_n must be positive")
        for h in self.hs:
            mesh_cells(h)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def mesh_cells(h) -> int:
    """Cells per side of the square (-1, 1)^2 for square side h."""
    n = Fraction(2) / Fraction(h).limit_denominator(10 ** 6)
    if n.denominator != 1 or n < 1:
        raise ConfigError(f"h = {h} does not divide the domain side 2")
    return int(n)


def _list(text, conv):
    return tuple(conv(t.strip()) for t in text.split(",") if t.strip())


def _optional(text, conv):
    return None if text.strip().lower() in ("default", "auto", "none") else conv(text)


def _fraction(text):
    return Fraction(text.strip())


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse INI text strictly into a RunConfig."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    kw = {}
    for section in cp.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - _KEYS[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    get = {s: cp[s] if cp.has_section(s) else {} for s in _KEYS}
    try:
        p, d, s, w = get["problem"], get["discretization"], get["solver"], get["sweep"]
        if "case" in p:
            kw["case"] = p["case"].strip()
        for key in ("alpha0", "alpha1"):
            if key in p:
                kw[key] = float(p[key])
        if "degrees" in d:
            kw["degrees"] = _list(d["degrees"], int)
        if "h" in d:
            kw["hs"] = _list(d["h"], _fraction)
        if "mu" in d:
            kw["mu"] = _optional(d["mu"], float)
        if "threshold" in d:
            kw["threshold"] = _optional(d["threshold"], int)
        if "depth" in d:
            kw["depth"] = _optional(d["depth"], int)
        if "method" in s:
            kw["method"] = s["method"].strip()
        if "tol" in s:
            kw["tol"] = float(s["tol"])
        if "max_iter" in s:
            kw["max_iter"] = int(s["max_iter"])
        if "coarse_n" in s:
            kw["coarse_n"] = int(s["coarse_n"])
        if "cycle" in s:
            kw["cycle"] = s["cycle"].strip()
        if "inner" in s:
            kw["inner"] = s["inner"].strip()
        if "backend" in s:
            kw["backend"] = _optional(s["backend"], str)
        if "alpha0_values" in w:
            kw["alpha0_values"] = _list(w["alpha0_values"], float)
        if "thresholds" in w:
            kw["thresholds"] = _list(w["thresholds"], int)
        if "lambda_degree" in w:
            kw["lambda_degree"] = int(w["lambda_degree"])
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}") from exc
    kw.update(overrides)
    return RunConfig(**kw)


def load_config(path, **overrides) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)
