"""Experiment configuration: sectioned key-value text files.

The format is INI-style: bracketed section headers with `key = value`
pairs, lists comma-separated.  One file describes one experiment family.
"""

from __future__ import annotations

import configparser
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .spin_algebra import Direction


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    n: int = 8
    J: float = 1.0
    total_time: float = 10.0
    dt: float = 0.01
    splitting_order: int = 2
    field_direction: Direction = field(default_factory=lambda: Direction(1.0, 0.0, 0.0))
    J_f: float = 1.0
    operator_labels: tuple = ("Sz",)
    gamma_list: tuple = (0.0,)
    N_list: tuple = (256, 1024, 4096)
    trials: int = 100
    estimation_mode: str = "abstract"
    true_axis: Optional[Direction] = None  # None means isotropic per trial
    psi0: tuple = (0.0, 0.0, 1.0)
    backgrounds: tuple = ()  # ((E_b, Direction), ...) when reconstructing
    seed: int = 7
    output_path: Optional[str] = None
    output_format: str = ""

    def validate(self):
        if self.n < 2 or self.n > 12:
            raise ConfigError(f"chain length n={self.n} outside the supported 2..12")
        if self.J <= 0:
            raise ConfigError("J must be positive")
        if self.J_f < 0:
            raise ConfigError("J_f must be nonnegative")
        if self.total_time <= 0 or self.dt <= 0:
            raise ConfigError("schedule times must be positive")
        steps = self.total_time / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"T/dt = {steps} is not an integer step count")
        if self.splitting_order not in (1, 2):
            raise ConfigError("splitting_order must be 1 or 2")
        for g in self.gamma_list:
            if g < 0:
                raise ConfigError("gamma values must be nonnegative")
        from .chain_model import PERTURBATION_LABELS

        for label in self.operator_labels:
            if label not in PERTURBATION_LABELS:
                raise ConfigError(f"unknown perturbation operator {label!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        for n_samples in self.N_list:
            if n_samples < 6:
                raise ConfigError("each N must be at least 6")
        if self.estimation_mode not in ("abstract", "full-chain"):
            raise ConfigError(f"unknown estimation mode {self.estimation_mode!r}")
        if len(self.backgrounds) not in (0, 2):
            raise ConfigError("configure either no background fields or exactly two")
        for e_b, _ in self.backgrounds:
            if e_b <= 0:
                raise ConfigError("background strengths must be positive")
        if self.output_format not in ("", "csv", "json"):
            raise ConfigError(f"unknown output format {self.output_format!r}")


def _parse_direction(raw: str, where: str) -> Direction:
    try:
        parts = [float(x) for x in raw.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse direction {raw!r} in {where}") from exc
    if len(parts) != 3:
        raise ConfigError(f"direction in {where} needs three components")
    v = np.asarray(parts)
    nrm = np.linalg.norm(v)
    if nrm < 1e-12:
        raise ConfigError(f"zero direction in {where}")
    if abs(nrm - 1.0) > 1e-9:
        print(f"warning: renormalizing direction {raw} in {where}", file=sys.stderr)
    return Direction.from_array(v, normalize=True)


def _parse_list(raw: str, cast, where: str):
    try:
        return tuple(cast(x.strip()) for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {raw!r} in {where}") from exc


def load_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    cfg = ExperimentConfig()
    try:
        if parser.has_section("chain"):
            sec = parser["chain"]
            cfg.n = sec.getint("n", cfg.n)
            cfg.J = sec.getfloat("J", cfg.J)
        if parser.has_section("schedule"):
            sec = parser["schedule"]
            cfg.total_time = sec.getfloat("T", cfg.total_time)
            cfg.dt = sec.getfloat("dt", cfg.dt)
            cfg.splitting_order = sec.getint("splitting_order", cfg.splitting_order)
        if parser.has_section("field"):
            sec = parser["field"]
            if "direction" in sec:
                cfg.field_direction = _parse_direction(sec["direction"], "[field]")
            cfg.J_f = sec.getfloat("J_f", cfg.J_f)
        if parser.has_section("perturbation"):
            sec = parser["perturbation"]
            if "operator_label" in sec:
                cfg.operator_labels = _parse_list(sec["operator_label"], str, "[perturbation]")
            if "gamma_list" in sec:
                cfg.gamma_list = _parse_list(sec["gamma_list"], float, "[perturbation]")
        if parser.has_section("estimation"):
            sec = parser["estimation"]
            if "N_list" in sec:
                cfg.N_list = _parse_list(sec["N_list"], int, "[estimation]")
            cfg.trials = sec.getint("trials", cfg.trials)
            cfg.estimation_mode = sec.get("mode", cfg.estimation_mode)
            if "true_axis" in sec:
                raw = sec["true_axis"].strip()
                cfg.true_axis = None if raw == "random" else _parse_direction(raw, "[estimation]")
            if "psi0" in sec:
                cfg.psi0 = _parse_list(sec["psi0"], float, "[estimation]")
        for name in ("background_1", "background_2"):
            if parser.has_section(name):
                sec = parser[name]
                strength = sec.getfloat("strength")
                direction = _parse_direction(sec.get("direction", "0,0,1"), f"[{name}]")
                cfg.backgrounds = cfg.backgrounds + ((strength, direction),)
        if parser.has_section("run"):
            cfg.seed = parser["run"].getint("seed", cfg.seed)
        if parser.has_section("output"):
            sec = parser["output"]
            cfg.output_path = sec.get("path", cfg.output_path)
            cfg.output_format = sec.get("format", cfg.output_format)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value in {path}: {exc}") from exc
    cfg.validate()
    return cfg
