"""Experiment configuration: flat key=value files with bracketed sections.

Parsing is strict and fails fast: every value is validated against the
preconditions of the module that will consume it, and errors carry the
section and key they came from.  parse(serialize(cfg)) reproduces cfg
exactly.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields

import numpy as np

from .displacement import NewmarkParams
from .integrator import SchemeParams

EXPERIMENTS = ("convergence-time", "unit-length", "energy-dissipation",
               "nutation", "stability", "single-run")
PRESETS = ("midpoint-newmark", "nr2025", "minimization")
M_KINDS = ("uniform", "helical", "expr")
U_KINDS = ("zero", "expr")
ZEEMAN_KINDS = ("constant", "pulse")


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    name: str = "single-run"

    # [mesh]
    mesh_n: int = 4
    mesh_side: float = 1.0

    # [time]
    T: float = 1.0
    k: float = 1e-3
    halvings: int = 0            # convergence/unit-length: run k * 2^-i, i <= halvings
    reference_halvings: int = 0  # convergence: reference at k * 2^-this
    k_list: tuple[float, ...] = ()

    # [scheme]
    preset: str = "midpoint-newmark"
    beta: float | None = None
    gamma: float | None = None
    precession: bool = True
    tol: float = 1e-10
    max_iter: int = 0            # 0 means the solver default (10 x dofs)

    # [material]
    alpha: float = 0.1
    lambda100: float = 3e-3
    mu: float = 19259.2593
    lam: float = 6046.5116

    # [zeeman]
    zeeman_kind: str = "constant"
    zeeman_value: tuple[float, float, float] = (1.0, 0.0, 0.0)
    pulse_component: int = 1
    pulse_height: float = 1.0
    pulse_ramp: float = 0.1
    pulse_hold: float = 0.1
    pulse_fall: float = 0.1

    # [initial]
    m_kind: str = "uniform"
    m_value: tuple[float, float, float] = (1.0, 0.0, 0.0)
    m_expr: str = ""
    m_normalize: bool = False
    u_kind: str = "zero"
    u_expr: str = ""
    udot_kind: str = "zero"
    udot_expr: str = ""

    # [output]
    out_dir: str = "out"
    stride: int = 0              # 0 means automatic

    # [stability]
    stability_n_list: tuple[int, ...] = (4, 5, 9, 16)
    stability_k_list: tuple[float, ...] = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    stability_beta_list: tuple[float, ...] = (0.0, 1.0 / 3.0)

    # [nutation]
    phase1_k: float = 2e-2
    phase1_T: float = 100.0
    phase1_alpha: float = 1.0
    lambda_m: float | None = None  # initial stretch scale, defaults to lambda100

    def validate(self) -> None:
        def fail(section, key, msg):
            raise ConfigError(f"[{section}] {key}: {msg}")

        if self.name not in EXPERIMENTS:
            fail("experiment", "name", f"must be one of {EXPERIMENTS}")
        if self.mesh_n < 1:
            fail("mesh", "n", "must be a positive integer")
        if not self.mesh_side > 0:
            fail("mesh", "side", "must be positive")
        if not self.T > 0:
            fail("time", "T", "must be positive")
        if not self.k > 0:
            fail("time", "k", "must be positive")
        if self.halvings < 0 or self.reference_halvings < 0:
            fail("time", "halvings", "must be nonnegative")
        for kk in self.k_list + self.stability_k_list:
            if not kk > 0:
                fail("time", "k_list", "entries must be positive")
        if self.preset not in PRESETS:
            fail("scheme", "preset", f"must be one of {PRESETS}")
        if self.preset != "midpoint-newmark" and (self.beta is not None
                                                  or self.gamma is not None):
            fail("scheme", "beta", f"preset {self.preset} pins beta and gamma")
        if not self.tol > 0:
            fail("scheme", "tol", "must be positive")
        if self.max_iter < 0:
            fail("scheme", "max_iter", "must be nonnegative")
        if not self.alpha > 0:
            fail("material", "alpha", "must be positive")
        if not self.mu > 0:
            fail("material", "mu", "must be positive")
        if not 2 * self.mu + 3 * self.lam > 0:
            fail("material", "lambda", "2*mu + 3*lambda must be positive")
        if self.zeeman_kind not in ZEEMAN_KINDS:
            fail("zeeman", "kind", f"must be one of {ZEEMAN_KINDS}")
        if self.pulse_component not in (0, 1, 2):
            fail("zeeman", "pulse_component", "must be 0, 1 or 2")
        if self.m_kind not in M_KINDS:
            fail("initial", "m", f"must be one of {M_KINDS}")
        if self.m_kind == "expr" and not self.m_expr.strip():
            fail("initial", "m_expr", "required when m = expr")
        if self.m_kind == "uniform" and not self.m_normalize:
            if abs(np.linalg.norm(self.m_value) - 1.0) > 1e-10:
                fail("initial", "m_value",
                     "must be a unit vector (or set m_normalize = true)")
        for kind, key in ((self.u_kind, "u"), (self.udot_kind, "udot")):
            if kind not in U_KINDS:
                fail("initial", key, f"must be one of {U_KINDS}")
        if self.u_kind == "expr" and not self.u_expr.strip():
            fail("initial", "u_expr", "required when u = expr")
        if self.udot_kind == "expr" and not self.udot_expr.strip():
            fail("initial", "udot_expr", "required when udot = expr")
        if self.stride < 0:
            fail("output", "stride", "must be nonnegative")
        for n in self.stability_n_list:
            if n < 1:
                fail("stability", "n_list", "entries must be positive integers")
        for b in self.stability_beta_list:
            if not 0.0 <= b <= 1.0:
                fail("stability", "beta_list", "entries must lie in [0, 1]")
        if not self.phase1_k > 0 or not self.phase1_T > 0:
            fail("nutation", "phase1_k", "phase-1 step and horizon must be positive")
        if not self.phase1_alpha > 0:
            fail("nutation", "phase1_alpha", "must be positive")

    def build_scheme(self, k: float | None = None,
                     beta: float | None = None) -> SchemeParams:
        """SchemeParams for this config; k and beta may be overridden by the
        sweep drivers."""
        k = self.k if k is None else k
        max_iter = None if self.max_iter == 0 else self.max_iter
        common = dict(tol=self.tol, max_iter=max_iter)
        if self.preset == "nr2025":
            return SchemeParams.nr2025(k, **common)
        if self.preset == "minimization":
            return SchemeParams.minimization(k, **common)
        b = beta if beta is not None else (
            self.beta if self.beta is not None else 1.0 / 3.0)
        g = self.gamma if self.gamma is not None else 0.5
        return SchemeParams(k=k, newmark=NewmarkParams(b, g),
                            magnetization="midpoint",
                            precession=self.precession, **common)


_SECTIONS = {
    "experiment": ["name"],
    "mesh": ["mesh_n", "mesh_side"],
    "time": ["T", "k", "halvings", "reference_halvings", "k_list"],
    "scheme": ["preset", "beta", "gamma", "precession", "tol", "max_iter"],
    "material": ["alpha", "lambda100", "mu", "lam"],
    "zeeman": ["zeeman_kind", "zeeman_value", "pulse_component", "pulse_height",
               "pulse_ramp", "pulse_hold", "pulse_fall"],
    "initial": ["m_kind", "m_value", "m_expr", "m_normalize", "u_kind",
                "u_expr", "udot_kind", "udot_expr"],
    "output": ["out_dir", "stride"],
    "stability": ["stability_n_list", "stability_k_list", "stability_beta_list"],
    "nutation": ["phase1_k", "phase1_T", "phase1_alpha", "lambda_m"],
}

# keys are written to file without their section prefix
_FILE_KEYS = {
    "name": "name", "mesh_n": "n", "mesh_side": "side",
    "zeeman_kind": "kind", "zeeman_value": "value",
    "m_kind": "m", "u_kind": "u", "udot_kind": "udot",
    "out_dir": "directory",
    "stability_n_list": "n_list", "stability_k_list": "k_list",
    "stability_beta_list": "beta_list",
}


def _format_value(val) -> str:
    if val is None:
        return ""
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, tuple):
        return " ".join(_format_value(v) for v in val)
    return str(val)


def serialize(cfg: ExperimentConfig) -> str:
    out = io.StringIO()
    for section, keys in _SECTIONS.items():
        out.write(f"[{section}]\n")
        for key in keys:
            fname = _FILE_KEYS.get(key, key)
            out.write(f"{fname} = {_format_value(getattr(cfg, key))}\n")
        out.write("\n")
    return out.getvalue()


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(key: str, raw: str, section: str):
    raw = raw.strip()
    ftype = _FIELD_TYPES[key]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "float | None":
            return None if raw == "" else float(raw)
        if ftype == "bool":
            if raw.lower() in ("true", "on", "yes", "1"):
                return True
            if raw.lower() in ("false", "off", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if ftype == "str":
            return raw
        if ftype.startswith("tuple[float, float, float]"):
            parts = tuple(float(v) for v in raw.split())
            if len(parts) != 3:
                raise ValueError("expected exactly 3 numbers")
            return parts
        if ftype.startswith("tuple[float"):
            return tuple(float(v) for v in raw.split())
        if ftype.startswith("tuple[int"):
            return tuple(int(v) for v in raw.split())
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc
    raise ConfigError(f"[{section}] {key}: unhandled field type {ftype}")


def parse(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc

    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"[{section}]: unknown section")
        file_to_field = {_FILE_KEYS.get(k, k): k for k in _SECTIONS[section]}
        for raw_key, raw_val in parser.items(section):
            if raw_key not in file_to_field:
                raise ConfigError(f"[{section}] {raw_key}: unknown key")
            fieldname = file_to_field[raw_key]
            values[fieldname] = _parse_value(fieldname, raw_val, section)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def load(path) -> ExperimentConfig:
    with open(path) as f:
        return parse(f.read())


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as f:
        f.write(serialize(cfg))
