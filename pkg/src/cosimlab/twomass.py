"""Ready-made two-mass experiments: reference constants and setup helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .compensator import (DEFAULT_SLOPE, LEAKY_RELU, ARCompensator, CompensatorNet, ExtrapolatorParams,
                          NetworkCompensator, TrainerConfig, init_from_linear)
from .core import CouplingScenario, SimulationTrace, run_cosim
from .plants import Mass1Plant, Mass2Plant, OscillatorParams, StopParams
from .trainer import OnlineTrainer

NOMINAL = OscillatorParams()
# design optimum for band [1, 6] rad/s, r = 2, dT = 1 ms, tau = 3 ms
A_OPT = ExtrapolatorParams([6.5103, -1.5509, -9.9296, 5.9702], 0.0)
# pre-trained linear network, same setting
A_TRAINED = ExtrapolatorParams([2.4748, -0.6470, -0.1664, -0.6664], 0.0)
STOP = StopParams(-0.1, 0.7)
X0 = (1.0, 1.0, 0.0, 0.0)


@dataclass
class CompensatorSetup:
    params: Optional[ExtrapolatorParams] = None
    net: Optional[CompensatorNet] = None
    slope: float = DEFAULT_SLOPE


def make_plants(scenario: CouplingScenario, params: OscillatorParams = NOMINAL,
                x0: Sequence[float] = X0, stop: Optional[StopParams] = None):
    x1, x2, v1, v2 = x0
    m1 = Mass1Plant(params, x1, v1, scenario.macro_step, scenario.micro_steps, stop)
    m2 = Mass2Plant(params, x2, v2, scenario.macro_step, scenario.micro_steps)
    return m1, m2


def _law(scenario: CouplingScenario, setup: CompensatorSetup) -> ExtrapolatorParams:
    kind, p, k = scenario.compensator_kind, scenario.history_len, scenario.delay_steps
    if kind == "zoh":
        return ExtrapolatorParams.zoh(p)
    if kind == "foh":
        return ExtrapolatorParams.foh(k, max(p, 2))
    if setup.params is None:
        raise ValueError(f"compensator kind {kind!r} needs coefficients")
    if setup.params.p != p:
        raise ValueError(f"coefficient count {setup.params.p} != history_len {p}")
    return setup.params


def make_compensators(scenario: CouplingScenario, setup: CompensatorSetup,
                      channels=("x1", "v1", "F")) -> dict:
    if scenario.compensator_kind == "network":
        out = {}
        for name in channels:
            net = setup.net.copy() if setup.net is not None else init_from_linear(
                _law(scenario, setup), setup.slope, LEAKY_RELU)
            if net.p != scenario.history_len:
                raise ValueError(f"network width {net.p} != history_len {scenario.history_len}")
            out[name] = NetworkCompensator(net)
        return out
    law = _law(scenario, setup)
    return {name: ARCompensator(law) for name in channels}


def make_trainers(scenario: CouplingScenario, compensators: dict, cfg: TrainerConfig,
                  deterministic: bool = True) -> dict:
    if not scenario.online_training:
        return {}
    if scenario.compensator_kind != "network":
        raise ValueError("online training needs a network compensator")
    return {name: OnlineTrainer(name, comp, cfg, scenario.delay_steps, deterministic)
            for name, comp in compensators.items()}


def simulate(scenario: CouplingScenario, setup: Optional[CompensatorSetup] = None,
             params: OscillatorParams = NOMINAL, x0: Sequence[float] = X0,
             stop: Optional[StopParams] = None, trainer_cfg: Optional[TrainerConfig] = None,
             deterministic: bool = True) -> SimulationTrace:
    setup = setup or CompensatorSetup()
    plants = make_plants(scenario, params, x0, stop)
    comps = make_compensators(scenario, setup)
    trainers = make_trainers(scenario, comps, trainer_cfg or TrainerConfig(), deterministic)
    return run_cosim(scenario, plants, comps, trainers)
