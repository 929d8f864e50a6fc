"""Trace summaries: windowed amplitudes and compensation overshoot at jumps."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import SimulationTrace


def window_amplitudes(t: np.ndarray, x: np.ndarray, window: float) -> np.ndarray:
    """``max |x|`` over consecutive windows of length ``window`` seconds."""
    t = np.asarray(t)
    x = np.asarray(x)
    edges = np.arange(t[0], t[-1] + window * 0.5, window)
    out = []
    for lo in edges:
        m = (t >= lo) & (t < lo + window)
        if m.sum() > 1:
            out.append(np.abs(x[m]).max())
    return np.array(out)


def amplitude_ratio(t: np.ndarray, x: np.ndarray, window: float) -> float:
    """Last-window amplitude over first-window amplitude (>1 means growing)."""
    amps = window_amplitudes(t, x, window)
    if amps.size < 2 or amps[0] == 0:
        return float("nan")
    return float(amps[-1] / amps[0])


def overshoot_factor(trace: SimulationTrace, channel: str, event_time: float, k: int,
                     p: int = 4, search: int = 6) -> Optional[float]:
    """Compensated jump divided by the true jump, at a discontinuity of ``channel``.

    The jump arrives in the delayed samples about ``k`` steps after
    ``event_time``.  The factor compares the peak compensated excursion over
    the following ``p`` steps with the step in the delayed signal; an exact
    (non-overshooting) compensator scores 1.
    """
    c = trace.channels[channel]
    dT = trace.time[1] - trace.time[0]
    n0 = int(event_time / dT) + k
    lo, hi = max(n0 - search, 1), min(n0 + search, c.delayed.size - 1)
    if hi <= lo:
        return None
    steps = np.abs(np.diff(c.delayed[lo - 1:hi + 1]))
    j = lo + int(np.argmax(steps))
    jump = c.delayed[j] - c.delayed[j - 1]
    if jump == 0:
        return None
    before = c.compensated[j - 1]
    seg = (c.compensated[j:j + p] - before) / jump
    return float(seg.max())
