"""Macro-step co-simulation of two plants through a delaying coupling channel.

Every macro step ``n`` (time ``n * dT``):

1. plants without direct feedthrough publish their outputs,
2. plants with feedthrough receive their compensated inputs and publish,
3. the remaining plants receive their inputs,
4. both plants advance by ``dT`` under the held (ZOH) or ramped (FOH) input.

A sample published at step ``n`` is readable by the receiver at step ``n + k``.
Before that, the channel yields the sender's initial output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

ZOH = "zoh"
FOH = "foh"
COMPENSATOR_KINDS = ("zoh", "foh", "linear_ar", "network")


class ConfigurationError(ValueError):
    pass


@dataclass
class CouplingScenario:
    macro_step: float = 1e-3
    delay_steps: int = 3
    history_len: int = 4
    reconstruction: str = ZOH
    compensator_kind: str = "zoh"
    duration: float = 10.0
    online_training: bool = False
    micro_steps: int = 10

    def __post_init__(self):
        if not self.macro_step > 0:
            raise ConfigurationError("macro_step must be positive")
        if int(self.delay_steps) != self.delay_steps or self.delay_steps < 0:
            raise ConfigurationError("delay_steps must be a nonnegative integer")
        if self.history_len < 1:
            raise ConfigurationError("history_len must be >= 1")
        if self.duration < self.macro_step:
            raise ConfigurationError("duration must cover at least one macro step")
        if self.reconstruction not in (ZOH, FOH):
            raise ConfigurationError(f"unknown reconstruction {self.reconstruction!r}")
        if self.compensator_kind not in COMPENSATOR_KINDS:
            raise ConfigurationError(f"unknown compensator kind {self.compensator_kind!r}")
        if self.micro_steps < 1:
            raise ConfigurationError("micro_steps must be >= 1")
        self.delay_steps = int(self.delay_steps)

    @property
    def delay(self) -> float:
        return self.delay_steps * self.macro_step

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.macro_step))


class SignalHistory:
    """Fixed-capacity ring buffer of one sampled signal, indexed by macro step."""

    def __init__(self, capacity: int, initial: float = 0.0):
        if capacity < 1:
            raise ConfigurationError("history capacity must be >= 1")
        self.capacity = capacity
        self.initial = float(initial)
        self._buf = [self.initial] * capacity
        self.next_index = 0

    def write(self, index: int, value: float):
        if index != self.next_index:
            raise ValueError(f"expected macro index {self.next_index}, got {index}")
        self._buf[index % self.capacity] = value
        self.next_index += 1

    def available(self, i: int) -> bool:
        return 0 <= i < self.next_index

    def window(self, newest: int, p: int) -> list:
        """``[u_newest, u_newest-1, ..., u_newest-p+1]`` without bounds checks."""
        buf, cap, init = self._buf, self.capacity, self.initial
        return [buf[i % cap] if i >= 0 else init for i in range(newest, newest - p, -1)]

    def read(self, i: int) -> float:
        if i < 0:
            return self.initial
        if i >= self.next_index or i < self.next_index - self.capacity:
            raise IndexError(f"macro index {i} not held (next={self.next_index})")
        return self._buf[i % self.capacity]


def delayed_read(history: SignalHistory, now: int, k: int, p: int) -> list:
    """``[u_{now-k}, ..., u_{now-k-p+1}]``; pre-start entries are the initial value."""
    if now < 0:
        raise ValueError("now must be >= 0")
    if history.capacity < k + p:
        raise ConfigurationError(f"history capacity {history.capacity} < k + p = {k + p}")
    return [history.read(now - k - j) for j in range(p)]


@dataclass
class ChannelTrace:
    sent: np.ndarray
    delayed: np.ndarray
    compensated: np.ndarray


@dataclass
class SimulationTrace:
    time: np.ndarray
    channels: dict
    state_time: np.ndarray
    states: dict
    events: list = field(default_factory=list)
    training_log: list = field(default_factory=list)
    diverged_at: Optional[float] = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


class _Channel:
    __slots__ = ("name", "history", "comp", "p", "k", "sent", "delayed", "compensated", "prev", "trainer")

    def __init__(self, name, initial, comp, k, trainer=None):
        self.name = name
        self.comp = comp
        self.p = comp.p
        self.k = k
        self.history = SignalHistory(k + self.p, initial)
        self.sent, self.delayed, self.compensated = [], [], []
        self.prev = None
        self.trainer = trainer


def run_cosim(scenario: CouplingScenario, plants: Sequence, compensators: Mapping,
              trainers: Optional[Mapping] = None) -> SimulationTrace:
    """Run the coupled pair ``plants = (a, b)`` for ``scenario.duration``.

    ``compensators`` maps every channel name (a sender output name) to a
    callable with attribute ``p``.  ``trainers`` optionally maps channel names
    to online trainers that may swap the compensator's weights at macro-step
    boundaries.
    """
    a, b = plants
    if len(a.output_names) != len(b.input_names) or len(b.output_names) != len(a.input_names):
        raise ConfigurationError("plant inputs and outputs do not match up")
    k = scenario.delay_steps
    if a.feedthrough and b.feedthrough and k == 0:
        raise ConfigurationError("algebraic loop: both plants have feedthrough and k = 0")
    trainers = dict(trainers or {})
    missing = set(a.output_names + b.output_names) - set(compensators)
    if missing:
        raise ConfigurationError(f"no compensator for channel(s) {sorted(missing)}")

    init_a = a.output()
    if b.feedthrough:
        init_b = b.output(init_a)
    else:
        init_b = b.output()
    if a.feedthrough:
        init_a = a.output(init_b)

    out_ch = {}
    for plant, init in ((a, init_a), (b, init_b)):
        out_ch[id(plant)] = [
            _Channel(name, float(v), compensators[name], k, trainers.get(name))
            for name, v in zip(plant.output_names, init)
        ]
    in_ch = {id(a): out_ch[id(b)], id(b): out_ch[id(a)]}

    dT = scenario.macro_step
    foh = scenario.reconstruction == FOH
    order_out = [p for p in (a, b) if not p.feedthrough]
    order_ft = [p for p in (a, b) if p.feedthrough]
    n_steps = scenario.n_steps
    state_hist = {id(a): [a.state.copy()], id(b): [b.state.copy()]}
    diverged_at = None

    def deliver(plant, n):
        u_start, u_end = [], []
        for ch in in_ch[id(plant)]:
            window = ch.history.window(n - k, ch.p)
            u = ch.comp(window)
            ch.delayed.append(window[0])
            ch.compensated.append(u)
            u_start.append(ch.prev if (foh and ch.prev is not None) else u)
            u_end.append(u)
            ch.prev = u
        return u_start, u_end

    def publish(plant, n, y):
        for ch, v in zip(out_ch[id(plant)], y):
            v = float(v)
            ch.history.write(n, v)
            ch.sent.append(v)

    all_channels = out_ch[id(a)] + out_ch[id(b)]
    for n in range(n_steps):
        for ch in all_channels:
            if ch.trainer is not None:
                ch.trainer.boundary(n, ch.delayed)
        inputs = {}
        for plant in order_out:
            publish(plant, n, plant.output())
        for plant in order_ft:
            inputs[id(plant)] = deliver(plant, n)
            publish(plant, n, plant.output(inputs[id(plant)][0]))
        for plant in order_out:
            inputs[id(plant)] = deliver(plant, n)
        t = n * dT
        for plant in (a, b):
            us, ue = inputs[id(plant)]
            plant.advance(t, us, ue)
            state_hist[id(plant)].append(plant.state.copy())
        if not all(math.isfinite(v) for p in (a, b) for v in p.state):
            diverged_at = (n + 1) * dT
            break

    for ch in all_channels:
        if ch.trainer is not None:
            ch.trainer.close()

    n_done = len(all_channels[0].compensated) if all_channels else 0
    channels = {
        ch.name: ChannelTrace(np.array(ch.sent[:n_done]), np.array(ch.delayed[:n_done]),
                              np.array(ch.compensated[:n_done]))
        for ch in all_channels
    }
    states = {getattr(p, "name", f"plant{i}"): np.array(state_hist[id(p)]) for i, p in enumerate((a, b))}
    events = list(getattr(a, "events", [])) + list(getattr(b, "events", []))
    log = [entry for ch in all_channels if ch.trainer is not None for entry in ch.trainer.log]
    n_states = len(state_hist[id(a)])
    return SimulationTrace(np.arange(n_done) * dT, channels, np.arange(n_states) * dT, states,
                           sorted(events, key=lambda e: e.time), log, diverged_at)
