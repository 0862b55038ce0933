"""INI run configuration (configparser) with documented defaults.

Unknown sections or keys are rejected with ConfigError so typos never pass silently.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

# section -> key -> (default, description)
SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "grid": {
        "dim": ("3", "spatial dimension (2 or 3)"),
        "n": ("48", "points per side, 2^k or 3*2^k"),
        "L": ("240.0", "box side length"),
        "dealias_fraction": ("0.6666666666666666", "keep modes with every |k_i| < fraction * n/2"),
    },
    "physics": {
        "variant": ("conducting", "conducting | nonconducting"),
        "mu": ("1.0", "shear viscosity mu > 0"),
        "lambda": ("-1.0", "bulk viscosity lambda, nu = lambda + 2 mu > 0"),
        "kappa": ("1.0", "heat conductivity (0 for nonconducting)"),
    },
    "potential": {
        "profile": ("zero", "zero | gaussian_bump | modulated_bump"),
        "amplitude": ("0.0", "bump amplitude"),
        "width": ("10.0", "bump width (needs L/2 >= 7.5 width)"),
        "mod_amplitude": ("0.0", "temporal modulation amplitude"),
        "mod_frequency": ("0.0", "temporal modulation angular frequency"),
    },
    "initial_data": {
        "seed": ("0", "RNG seed for data placement"),
        "amplitude": ("0.01", "limit-mode (Theta, v) amplitude"),
        "osc_amplitude": ("0.01", "oscillating-mode (q, Qu) amplitude"),
        "width": ("10.0", "Gaussian width"),
        "ill_prepared": ("false", "add an eps-dependent O(1) oscillating component"),
    },
    "time": {
        "T": ("2.0", "final time (original variables)"),
        "dt": ("0.02", "time step"),
        "stride": ("1", "snapshot every stride steps"),
        "scheme": ("etdrk3", "etdrk3 | etdrk2"),
        "nonlinear": ("true", "include nonlinear terms"),
        "eps": ("0.125", "Mach number for simulate"),
        "eps_ladder": ("0.25, 0.125, 0.0625, 0.03125", "dyadic Mach ladder for converge"),
    },
    "norms": {
        "osc_pairs": ("4:0.5, 8:0", "p:s pairs for oscillating-mode decay"),
        "incomp_pairs": ("4:0.6", "p:s pairs for incompressible convergence (s > 1/2)"),
    },
    "linear": {
        "kappa_t": ("1.0", "rescaled conductivity for linear-verify"),
        "variant": ("conducting", "conducting | nonconducting"),
        "r_min": ("0.015625", "smallest |xi|"),
        "r_max": ("64.0", "largest |xi|"),
        "r_count": ("64", "log-spaced frequencies (0 gives an empty sweep)"),
        "t_max": ("50.0", "sweep final time"),
        "t_count": ("32", "time samples"),
        "C_budget": ("10.0", "largest admissible decay constant C"),
    },
    "strichartz": {
        "p_values": ("2, 4, 8", "Lebesgue exponents"),
        "s": ("0.0", "regularity of the data"),
        "T": ("2.0", "window length"),
        "nt": ("41", "time samples"),
    },
    "output": {
        "dir": ("out", "output directory"),
        "format": ("csv", "csv | json"),
        "snapshots": ("false", "write binary snapshots"),
        "workers": ("1", "parallel eps runs"),
    },
}


def help_text() -> str:
    lines = ["\b", "Configuration keys (INI sections):"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]")
        for k, (d, desc) in keys.items():
            lines.append(f"    {k} = {d}  ; {desc}")
    return "\n".join(lines)


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple[float, ...]:
    out = []
    for x in v.replace(";", ",").split(","):
        x = x.strip()
        if x:
            out.append(math.inf if x.lower() in ("inf", "infinity") else float(x))
    return tuple(out)


def _pairs(v: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in v.split(","):
        item = item.strip()
        if not item:
            continue
        p, _, s = item.partition(":")
        out.append((math.inf if p.strip() == "inf" else float(p), float(s)))
    return tuple(out)


@dataclass
class Config:
    raw: dict

    def get(self, sec: str, key: str) -> str:
        return self.raw[sec][key]

    def f(self, sec, key) -> float:
        try:
            return float(self.raw[sec][key])
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: {exc}") from exc

    def i(self, sec, key) -> int:
        try:
            return int(self.raw[sec][key])
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: {exc}") from exc

    def b(self, sec, key) -> bool:
        return _bool(self.raw[sec][key])

    def floats(self, sec, key) -> tuple[float, ...]:
        try:
            return _floats(self.raw[sec][key])
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: {exc}") from exc

    def pairs(self, sec, key):
        try:
            return _pairs(self.raw[sec][key])
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: {exc}") from exc


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    raw = {sec: {k: d for k, (d, _) in keys.items()} for sec, keys in SCHEMA.items()}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"unknown section [{sec}]")
            for k, v in cp.items(sec):
                if k not in SCHEMA[sec]:
                    raise ConfigError(f"unknown key {k!r} in [{sec}]")
                raw[sec][k] = v
    for (sec, k), v in (overrides or {}).items():
        raw[sec][k] = str(v)
    return Config(raw)
