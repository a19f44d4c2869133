"""Simulation configuration: INI-style files with sections, plus key=value overrides.

Example file::

    [scenario]
    profile = VehB
    n_bs = 4
    n_users = 2
    link = UL

    [frame]
    two_m = 128
    kappa = 4
    n_sym = 100
    guard = 4

    [run]
    designs = classical_mmse, optimized_mmse
    snr_db_list = 25
    n_channel_draws = 1
    n_frames_per_draw = 220
    seed = 2018

Section names are for readability only; every key is unique across sections.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable

from ..channel import PROFILES, get_profile
from ..design import Link, parse_design_name
from ..modem import as_constellation


class ConfigError(ValueError):
    pass


def _parse_list(text: str, conv) -> tuple:
    items = [t for t in (s.strip() for s in str(text).replace(";", ",").split(",")) if t]
    return tuple(conv(t) for t in items)


def parse_snr_list(text) -> tuple[float, ...]:
    """Comma list of dB values; ``a:b:step`` ranges (inclusive) and ``-inf`` allowed."""
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    out = []
    for item in _parse_list(text, str):
        if ":" in item:
            start, stop, step = (float(x) for x in item.split(":"))
            n = int(round((stop - start) / step)) + 1
            out.extend(start + k * step for k in range(n))
        else:
            out.append(float(item))
    return tuple(out)


@dataclass(frozen=True)
class SimConfig:
    two_m: int = 128
    spacing_hz: float = 15000.0
    kappa: int = 4
    pulse: str = "phydyas"
    profile: str = "VehB"
    n_bs: int = 4
    n_users: int = 2
    link: str = "UL"
    designs: tuple[str, ...] = ("classical_mmse", "optimized_mmse")
    constellation: str = "QAM16"
    snr_db_list: tuple[float, ...] = tuple(float(x) for x in range(0, 45, 5))
    n_channel_draws: int = 50
    n_frames_per_draw: int = 20
    n_sym: int = 32
    guard: int = 4
    seed: int = 2018
    total_power: float = 1.0
    workers: int = 1
    theory_derivatives: str = "grid"

    @property
    def sample_rate(self) -> float:
        return self.two_m * self.spacing_hz

    @property
    def M(self) -> int:
        return self.two_m // 2

    def validate(self) -> "SimConfig":
        positive = ("two_m", "kappa", "n_bs", "n_users", "n_channel_draws", "n_frames_per_draw", "n_sym", "workers")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive (got {getattr(self, name)})")
        if self.two_m % 2:
            raise ConfigError(f"two_m must be even (got {self.two_m})")
        if self.spacing_hz <= 0 or self.total_power <= 0:
            raise ConfigError("spacing_hz and total_power must be positive")
        if self.guard < self.kappa:
            raise ConfigError(f"guard ({self.guard}) must be at least kappa ({self.kappa})")
        if self.n_sym <= 2 * self.guard:
            raise ConfigError(f"n_sym ({self.n_sym}) must exceed 2*guard ({2 * self.guard}); raise n_sym or lower guard")
        if self.n_sym % 2 or self.guard % 2:
            raise ConfigError("n_sym and guard must be even so complex symbols stay paired")
        if self.pulse not in ("phydyas", "smooth_pr"):
            raise ConfigError(f"pulse must be 'phydyas' or 'smooth_pr' (got {self.pulse!r})")
        if self.pulse == "smooth_pr" and self.kappa != 1:
            raise ConfigError("the smooth_pr pulse has kappa = 1; set kappa = 1")
        try:
            get_profile(self.profile)
        except ValueError:
            raise ConfigError(f"profile must be one of {sorted(PROFILES)} (got {self.profile!r})") from None
        try:
            Link.parse(self.link)
        except ValueError:
            raise ConfigError(f"link must be UL or DL (got {self.link!r})") from None
        try:
            as_constellation(self.constellation)
        except ValueError:
            raise ConfigError(f"constellation must be QAM4 or QAM16 (got {self.constellation!r})") from None
        if not self.designs:
            raise ConfigError("designs must list at least one design")
        for name in self.designs:
            try:
                crit, _ = parse_design_name(name)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if crit.value == "ZF" and self.n_bs < self.n_users:
                raise ConfigError(f"{name} needs n_bs >= n_users ({self.n_bs} < {self.n_users})")
        if not self.snr_db_list:
            raise ConfigError("snr_db_list must not be empty")
        if self.theory_derivatives not in ("grid", "design"):
            raise ConfigError(f"theory_derivatives must be 'grid' or 'design' (got {self.theory_derivatives!r})")
        return self

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f for f in fields(SimConfig)}


def _coerce(name: str, value):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}; valid keys: {', '.join(sorted(_FIELD_TYPES))}")
    default = _FIELD_TYPES[name].default
    if name == "snr_db_list":
        return parse_snr_list(value)
    if name == "designs":
        return value if isinstance(value, tuple) else _parse_list(value, str)
    if isinstance(value, str):
        value = value.strip()
    try:
        if isinstance(default, bool):
            return str(value).lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise ConfigError(f"{name} = {value!r} is not a valid {type(default).__name__}") from None
    return str(value)


def parse_overrides(items: Iterable[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like key=value")
        out[key.strip()] = value
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None, base: SimConfig | None = None) -> SimConfig:
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            for key, value in parser.items(section):
                if key in values:
                    raise ConfigError(f"key {key!r} appears in more than one section")
                values[key] = value
    values.update(overrides or {})
    coerced = {k: _coerce(k, v) for k, v in values.items()}
    cfg = dataclasses.replace(base or SimConfig(), **coerced)
    return cfg.validate()


def write_config(cfg: SimConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    flat = cfg.to_dict()
    parser["config"] = {k: ", ".join(str(x) for x in v) if isinstance(v, list) else str(v) for k, v in flat.items()}
    with open(path, "w") as fh:
        parser.write(fh)
