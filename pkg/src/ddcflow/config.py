"""Flat key-value run configuration.

The configuration file format is UTF-8 text with one ``key = value``
pair per line and ``#`` comments, so it parses identically everywhere
and echoes bit-exactly into report headers.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "config_echo"]


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


_PROBLEMS = ("manufactured", "step_channel")
_PREDICTORS = ("av", "sav")
_DT_RULES = ("half_h", "fixed")
_AV_RULES = ("equals_dt", "fixed")
_DEFECT_FORMS = ("gradient_gradient", "literal")


@dataclass
class RunConfig:
    problem: str = "manufactured"
    predictor: str = "sav"
    nu: float = 0.1
    levels: tuple[int, ...] = (4, 8, 16, 32)
    dt_rule: str = "half_h"
    dt_fixed: float = 0.0
    av_rule: str = "equals_dt"
    av_fixed: float = 0.0
    T: float = 1.0
    picard_tol: float = 1e-9
    picard_max: int = 50
    defect_term_form: str = "gradient_gradient"
    output_dir: str = "out"
    snapshot_every: int = 0

    def validate(self):
        if self.problem not in _PROBLEMS:
            raise ConfigError(f"unknown problem '{self.problem}'")
        if self.predictor not in _PREDICTORS:
            raise ConfigError(f"unknown predictor '{self.predictor}'")
        if self.dt_rule not in _DT_RULES:
            raise ConfigError(f"unknown dt_rule '{self.dt_rule}'")
        if self.av_rule not in _AV_RULES:
            raise ConfigError(f"unknown av_rule '{self.av_rule}'")
        if self.defect_term_form not in _DEFECT_FORMS:
            raise ConfigError(f"unknown defect_term_form '{self.defect_term_form}'")
        if not self.levels:
            raise ConfigError("levels must be nonempty")
        base = self.levels[0]
        for a, b in zip(self.levels, self.levels[1:]):
            if b <= a:
                raise ConfigError("levels must be increasing")
        for lv in self.levels:
            if lv <= 0:
                raise ConfigError("levels must be positive")
            ratio = lv / base
            if abs(ratio - round(ratio)) > 1e-12 or (
                round(ratio) & (round(ratio) - 1)
            ) != 0:
                raise ConfigError("levels must be power-of-two multiples of the first")
        if self.nu <= 0 or self.T <= 0:
            raise ConfigError("nu and T must be positive")
        if self.dt_rule == "fixed" and self.dt_fixed <= 0:
            raise ConfigError("dt_rule 'fixed' requires positive dt_fixed")
        if self.av_rule == "fixed" and self.av_fixed < 0:
            raise ConfigError("av_rule 'fixed' requires nonnegative av_fixed")
        if self.picard_tol <= 0 or self.picard_max < 1:
            raise ConfigError("invalid nonlinear iteration controls")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be nonnegative")
        return self

    def dt_for_level(self, level: int) -> float:
        if self.dt_rule == "half_h":
            return 0.5 / level
        return self.dt_fixed

    def av_for_dt(self, dt: float) -> float:
        if self.av_rule == "equals_dt":
            return dt
        return self.av_fixed


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    if key == "levels":
        try:
            return tuple(int(part) for part in raw.replace(",", " ").split())
        except ValueError as exc:
            raise ConfigError(f"cannot parse levels '{raw}'") from exc
    target = _FIELD_TYPES[key]
    try:
        if target == "int":
            return int(raw)
        if target == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = '{raw}'") from exc


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        setattr(cfg, key, _convert(key, raw))
    return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)


def config_echo(cfg: RunConfig) -> list[str]:
    """Canonical one-line-per-key echo of a configuration."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name == "levels":
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = format(value, ".17g")
        lines.append(f"{f.name} = {value}")
    return lines
