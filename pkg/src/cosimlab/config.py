"""Scenario files: INI sections with a fixed, documented key set.

Unknown sections or keys are rejected.  Every key has a default, so a file only
needs the values that differ.  Environment variables named
``COSIMLAB_<SECTION>_<KEY>`` override file values.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass
from typing import Any

from .compensator import ExtrapolatorParams, TrainerConfig, load_weights
from .core import CouplingScenario
from .design import DesignSpec
from .plants import OscillatorParams, StopParams
from .twomass import A_OPT, CompensatorSetup

ENV_PREFIX = "COSIMLAB_"


class ConfigError(ValueError):
    def __init__(self, section: str, key: str, msg: str):
        super().__init__(f"[{section}] {key}: {msg}" if key else f"[{section}]: {msg}")
        self.section = section
        self.key = key


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def _opt_float(text: str):
    return None if text.strip() in ("", "none", "None") else float(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {"float": float, "int": int, "bool": _bool, "str": str, "floats": _floats, "optfloat": _opt_float}


def _emit(kind: str, value) -> str:
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "optfloat":
        return "" if value is None else repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    return str(value)


# section -> key -> (type, default, description)
SCHEMA: dict = {
    "plant": {
        "m1": ("float", 100.0, "mass 1 [kg]"),
        "m2": ("float", 1.0, "mass 2 [kg]"),
        "c1": ("float", 10.0, "mass-1 spring [N/m]"),
        "c2": ("float", 10.0, "mass-2 spring [N/m]"),
        "cc": ("float", 10.0, "coupling spring [N/m]"),
        "d1": ("float", 0.01, "mass-1 damper [N s/m]"),
        "d2": ("float", 0.01, "mass-2 damper [N s/m]"),
        "dc": ("float", 0.01, "coupling damper [N s/m]"),
    },
    "stop": {
        "enabled": ("bool", False, "mechanical stop on mass 1"),
        "x_stop": ("float", -0.1, "stop position [m]"),
        "restitution": ("float", 0.7, "coefficient of restitution in (0, 1]"),
    },
    "initial": {
        "x1": ("float", 1.0, "initial position of mass 1 [m]"),
        "x2": ("float", 1.0, "initial position of mass 2 [m]"),
        "v1": ("float", 0.0, "initial velocity of mass 1 [m/s]"),
        "v2": ("float", 0.0, "initial velocity of mass 2 [m/s]"),
    },
    "coupling": {
        "macro_step": ("float", 1e-3, "communication step dT [s]"),
        "delay_steps": ("int", 3, "delay per direction in macro steps (tau = k dT)"),
        "history_len": ("int", 4, "samples p seen by the compensator"),
        "reconstruction": ("str", "zoh", "zoh | foh"),
        "duration": ("float", 500.0, "simulated time [s]"),
        "micro_steps": ("int", 10, "RK4 steps per macro step"),
    },
    "compensator": {
        "kind": ("str", "linear_ar", "zoh | foh | linear_ar | network"),
        "a": ("floats", list(A_OPT.a), "AR coefficients, newest sample first"),
        "b": ("float", 0.0, "AR bias"),
        "slope": ("float", 0.01, "leaky-ReLU slope of the network"),
        "weights_file": ("str", "", "optional network weights table (overrides a, b)"),
    },
    "training": {
        "enabled": ("bool", False, "online retraining of network compensators"),
        "deterministic": ("bool", True, "inline training with fixed hand-off steps"),
        "lr": ("float", 1e-3, "Adam step size"),
        "beta1": ("float", 0.9, "Adam first-moment decay"),
        "beta2": ("float", 0.999, "Adam second-moment decay"),
        "eps": ("float", 1e-8, "Adam epsilon"),
        "epochs": ("int", 2000, "epochs per training cycle"),
        "batch_size": ("int", 0, "mini-batch size, 0 = full batch"),
        "trigger_every": ("int", 5000, "start a cycle every this many macro steps"),
        "max_samples": ("int", 20000, "most recent samples kept for training"),
        "apply_delay_steps": ("int", 2000, "deterministic mode: steps between trigger and hand-off"),
    },
    "design": {
        "band_min": ("float", 1.0, "lower band edge [rad/s]"),
        "band_max": ("float", 6.0, "upper band edge [rad/s]"),
        "relative_degree": ("int", 2, "relative degree r of the coupled system"),
        "exponent": ("optfloat", None, "out-of-band exponent v; empty = 1/(2r)"),
        "alpha": ("float", 100.0, "magnitude weight"),
        "beta": ("float", 1.0, "phase weight"),
        "gamma": ("float", 1e4, "out-of-band weight"),
        "grid_points": ("int", 2000, "log-spaced quadrature nodes"),
        "grid_min": ("float", 1e-2, "lowest log-grid frequency [rad/s]"),
        "starts": ("int", 20, "Nelder-Mead starts"),
    },
    "analysis": {
        "grid_min": ("float", 1e-2, "lowest frequency of the Bode/Nyquist grid [rad/s]"),
        "grid_points": ("int", 2000, "initial log-spaced points (refined adaptively)"),
        "marginal_eps": ("float", 1e-3, "distance to -1 below which the verdict is marginal"),
        "aliasing_margin": ("float", math.pi / 100, "pass iff w_max * dT is below this"),
        "empirical_points": ("int", 30, "frequencies for the sine-drive cross-check"),
        "empirical_min": ("float", 0.1, "[rad/s]"),
        "empirical_max": ("float", 100.0, "[rad/s]"),
    },
    "output": {
        "directory": ("str", "out", "where CSV/JSON results go"),
        "window": ("float", 50.0, "amplitude-trend window [s]"),
    },
    "run": {
        "seed": ("int", 0, "seed for optimizer starts and training shuffles"),
    },
}


@dataclass
class ScenarioFile:
    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    # -- construction of domain objects --

    def oscillator(self) -> OscillatorParams:
        return OscillatorParams(**self["plant"])

    def stop(self):
        s = self["stop"]
        return StopParams(s["x_stop"], s["restitution"]) if s["enabled"] else None

    def x0(self) -> tuple:
        i = self["initial"]
        return (i["x1"], i["x2"], i["v1"], i["v2"])

    def scenario(self) -> CouplingScenario:
        c = self["coupling"]
        return CouplingScenario(c["macro_step"], c["delay_steps"], c["history_len"], c["reconstruction"],
                                self["compensator"]["kind"], c["duration"], self["training"]["enabled"],
                                c["micro_steps"])

    def extrapolator(self) -> ExtrapolatorParams:
        c = self["compensator"]
        return ExtrapolatorParams(c["a"], c["b"])

    def compensator_setup(self) -> CompensatorSetup:
        c = self["compensator"]
        net = load_weights(c["weights_file"]) if c["weights_file"] else None
        return CompensatorSetup(self.extrapolator(), net, c["slope"])

    def trainer_config(self) -> TrainerConfig:
        t = self["training"]
        return TrainerConfig(t["lr"], t["beta1"], t["beta2"], t["eps"], t["epochs"],
                             t["batch_size"] or None, t["trigger_every"], t["max_samples"],
                             t["apply_delay_steps"], self["run"]["seed"])

    def design_spec(self) -> DesignSpec:
        d = self["design"]
        c = self["coupling"]
        return DesignSpec((d["band_min"], d["band_max"]), d["relative_degree"], d["alpha"], d["beta"],
                          d["gamma"], c["history_len"], c["macro_step"], c["delay_steps"] * c["macro_step"],
                          d["exponent"], d["grid_points"], d["grid_min"])

    def validate(self):
        """Build every domain object once so bad values surface with their key."""
        checks = [("plant", self.oscillator), ("stop", self.stop), ("coupling", self.scenario),
                  ("compensator", self.extrapolator),
                  ("training", lambda: self.trainer_config().validate(self["coupling"]["history_len"],
                                                                       self["coupling"]["delay_steps"])),
                  ("design", self.design_spec)]
        for section, fn in checks:
            try:
                fn()
            except (ValueError, TypeError) as exc:
                raise ConfigError(section, "", str(exc)) from exc
        if len(self["compensator"]["a"]) != self["coupling"]["history_len"] and self["compensator"]["kind"] in (
                "linear_ar", "network"):
            raise ConfigError("compensator", "a", "length must equal [coupling] history_len")
        return self

    # -- text form --

    def dumps(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key, (kind, _, doc) in keys.items():
                lines.append(f"# {doc}")
                lines.append(f"{key} = {_emit(kind, self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())


def defaults() -> ScenarioFile:
    return ScenarioFile({s: {k: (list(v[1]) if isinstance(v[1], list) else v[1]) for k, v in keys.items()}
                         for s, keys in SCHEMA.items()})


def _set(cfg: ScenarioFile, section: str, key: str, text: str):
    if section not in SCHEMA:
        raise ConfigError(section, "", "unknown section")
    if key not in SCHEMA[section]:
        raise ConfigError(section, key, "unknown key")
    kind = SCHEMA[section][key][0]
    try:
        cfg.values[section][key] = _PARSERS[kind](text)
    except ValueError as exc:
        raise ConfigError(section, key, f"cannot parse {text!r} as {kind}") from exc


def loads(text: str, env: Any = None) -> ScenarioFile:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("?", "", str(exc)) from exc
    cfg = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "", "unknown section")
        for key, value in parser.items(section):
            _set(cfg, section, key, value)
    env = os.environ if env is None else env
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        for section in SCHEMA:
            if rest.startswith(section + "_"):
                _set(cfg, section, rest[len(section) + 1:], value)
                break
        else:
            raise ConfigError("env", name, "does not name a known section")
    return cfg


def load(path, env: Any = None) -> ScenarioFile:
    with open(path) as fh:
        return loads(fh.read(), env)
