"""Online retraining of a network compensator while the co-simulation runs.

The trainer sees the received (delayed) coupling signal, builds sliding-window
samples from it, trains a copy of the current network and hands the result back
as one immutable :class:`CompensatorNet`.  The compensator only swaps weights at
a macro-step boundary.

Two modes:

* deterministic: training runs inline at the trigger step and the result is
  applied ``apply_delay_steps`` later, so repeated runs are bit-identical;
* concurrent: training runs in a worker process and the result is applied at
  the first boundary after it arrives.
"""

from __future__ import annotations

import logging
from concurrent.futures import Future, ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .compensator import (CompensatorNet, NetworkCompensator, TrainerConfig, TrainResult,
                          train, training_arrays)

log = logging.getLogger(__name__)


@dataclass
class TrainingCycle:
    channel: str
    trigger_step: int
    apply_step: Optional[int]
    n_samples: int
    loss_before: float
    loss_after: float
    accepted: bool


def training_job(net: CompensatorNet, signal: np.ndarray, p: int, k: int, cfg: TrainerConfig,
                 seed: int) -> TrainResult:
    """Worker entry point: duplicate the net, build samples, train."""
    X, y = training_arrays(signal, p, k, cfg.max_samples)
    if len(y) == 0:
        return TrainResult(net.copy(), float("nan"), float("nan"), False)
    return train(net.copy(), (X, y), cfg, rng=seed)


class OnlineTrainer:
    def __init__(self, channel: str, compensator: NetworkCompensator, cfg: TrainerConfig, k: int,
                 deterministic: bool = True, executor: Optional[ProcessPoolExecutor] = None):
        cfg.validate(compensator.p, k)
        self.channel = channel
        self.compensator = compensator
        self.cfg = cfg
        self.k = k
        self.deterministic = deterministic
        self._executor = executor
        self._own_executor = False
        self._pending: Optional[tuple] = None
        self.log: list[TrainingCycle] = []
        self._cycles = 0

    def _signal(self, received: list) -> np.ndarray:
        # the first k received entries are start-up fill, not data
        keep = self.cfg.max_samples + self.compensator.p + self.k - 1
        data = received[self.k:]
        return np.array(data[-keep:], dtype=float)

    def boundary(self, n: int, received: list):
        """Called at the start of macro step ``n`` with the received samples so far."""
        if self._pending is not None:
            self._maybe_apply(n)
        if n > 0 and n % self.cfg.trigger_every == 0 and self._pending is None:
            self._trigger(n, received)

    def _trigger(self, n: int, received: list):
        signal = self._signal(received)
        p = self.compensator.p
        if signal.size < p + self.k:
            return
        seed = self.cfg.seed + self._cycles
        self._cycles += 1
        net = self.compensator.net
        if self.deterministic:
            result = training_job(net, signal, p, self.k, self.cfg, seed)
            self._pending = (n, result, n + self.cfg.apply_delay_steps, signal.size)
        else:
            if self._executor is None:
                self._executor = ProcessPoolExecutor(max_workers=1)
                self._own_executor = True
            fut = self._executor.submit(training_job, net, signal, p, self.k, self.cfg, seed)
            self._pending = (n, fut, None, signal.size)

    def _maybe_apply(self, n: int):
        trig, payload, due, n_sig = self._pending
        if isinstance(payload, Future):
            if not payload.done():
                return
            try:
                result = payload.result()
            except Exception:  # a failed cycle keeps the current weights
                log.exception("training cycle on %s failed", self.channel)
                self._pending = None
                return
        else:
            if n < due:
                return
            result = payload
        if result.accepted:
            self.compensator.set_net(result.net)
        self.log.append(TrainingCycle(self.channel, trig, n, n_sig, result.loss_before,
                                      result.loss_after, result.accepted))
        self._pending = None

    def close(self):
        if self._pending is not None and isinstance(self._pending[1], Future):
            self._pending[1].cancel()
        if self._own_executor and self._executor is not None:
            self._executor.shutdown(wait=True, cancel_futures=True)
            self._executor = None
