"""Two-mass oscillator halves, the mechanical-stop variant and the monolithic reference.

Mass 1 hangs on (c1, d1), mass 2 on (c2, d2); the coupling element (cc, dc) sits
between them.  For co-simulation the oscillator is cut through the coupling
element (force/displacement coupling): the mass-1 side sends position and
velocity, the mass-2 side evaluates the coupling force

    F_c = cc * (x1 - x2) + dc * (v1 - v2)

which acts on mass 2 with ``+F_c`` and on mass 1 with ``-F_c``.

All integration uses the classical fixed-step RK4 scheme.  The plants are linear
between stop events, so one RK4 micro step is an exact affine map of
(state, input at step start, input at step end); the plant classes precompute
that map once and compose it over a macro step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class OscillatorParams:
    m1: float = 100.0
    m2: float = 1.0
    c1: float = 10.0
    c2: float = 10.0
    cc: float = 10.0
    d1: float = 0.01
    d2: float = 0.01
    dc: float = 0.01

    def __post_init__(self):
        if self.m1 <= 0 or self.m2 <= 0:
            raise ValueError("masses must be positive")
        if min(self.c1, self.c2) <= 0 or self.cc < 0:
            raise ValueError("stiffnesses must be positive (coupling stiffness may be zero)")
        if min(self.d1, self.d2, self.dc) < 0:
            raise ValueError("dampings must be nonnegative")


@dataclass(frozen=True)
class StopParams:
    x_stop: float = -0.1
    e: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.e <= 1.0:
            raise ValueError(f"restitution must lie in (0, 1], got {self.e}")


@dataclass
class MassState:
    x: float
    v: float


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of size ``h`` for ``y' = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _ramp(u0, u1, t0: float, h: float):
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    return lambda t: u0 + (u1 - u0) * ((t - t0) / h)


def mass1_rhs(params: OscillatorParams):
    A = np.array([[0.0, 1.0], [-params.c1 / params.m1, -params.d1 / params.m1]])
    B = np.array([[0.0], [-1.0 / params.m1]])
    return A, B


def mass2_rhs(params: OscillatorParams):
    m2 = params.m2
    A = np.array([[0.0, 1.0], [-(params.c2 + params.cc) / m2, -(params.d2 + params.dc) / m2]])
    B = np.array([[0.0, 0.0], [params.cc / m2, params.dc / m2]])
    return A, B


def monolithic_matrix(params: OscillatorParams) -> np.ndarray:
    """State matrix of the uncut oscillator, state order (x1, v1, x2, v2)."""
    p = params
    return np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-(p.c1 + p.cc) / p.m1, -(p.d1 + p.dc) / p.m1, p.cc / p.m1, p.dc / p.m1],
        [0.0, 0.0, 0.0, 1.0],
        [p.cc / p.m2, p.dc / p.m2, -(p.c2 + p.cc) / p.m2, -(p.d2 + p.dc) / p.m2],
    ])


def coupling_force(params: OscillatorParams, x1: float, v1: float, x2: float, v2: float) -> float:
    return params.cc * (x1 - x2) + params.dc * (v1 - v2)


def step_mass1(state: MassState, coupling_force: float, dt: float, params: OscillatorParams,
               force_end: Optional[float] = None) -> MassState:
    """Advance mass 1 by one RK4 step under the reported coupling force.

    The force is held constant, or ramped linearly to ``force_end`` when given.
    Mass 1 feels the reaction ``-coupling_force``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    A, B = mass1_rhs(params)
    u = _ramp(coupling_force, coupling_force if force_end is None else force_end, 0.0, dt)
    y = rk4_step(lambda t, y: A @ y + B @ u(t), 0.0, np.array([state.x, state.v]), dt)
    return MassState(float(y[0]), float(y[1]))


def step_mass2(state: MassState, x1_in: float, v1_in: float, dt: float, params: OscillatorParams,
               x1_end: Optional[float] = None, v1_end: Optional[float] = None):
    """Advance mass 2 by one RK4 step and return ``(state, F_c)``.

    ``F_c`` is evaluated with the end-of-step state and input.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    A, B = mass2_rhs(params)
    x1e = x1_in if x1_end is None else x1_end
    v1e = v1_in if v1_end is None else v1_end
    u = _ramp([x1_in, v1_in], [x1e, v1e], 0.0, dt)
    y = rk4_step(lambda t, y: A @ y + B @ u(t), 0.0, np.array([state.x, state.v]), dt)
    new = MassState(float(y[0]), float(y[1]))
    return new, coupling_force(params, x1e, v1e, new.x, new.v)


def apply_stop_event(state: MassState, stop: StopParams) -> MassState:
    """Clamp mass 1 onto the stop and reflect an approaching velocity."""
    v = -stop.e * state.v if state.v < 0 else state.v
    return MassState(stop.x_stop, v)


class AffineStepper:
    """RK4 for ``y' = A y + B u(t)`` with ``u`` linear in time over each step.

    One step of size ``h`` is ``y' = Phi y + G0 u_start + G1 u_end``.  The
    matrices are obtained by pushing unit vectors through :func:`rk4_step`, so
    they are the RK4 update itself and not an approximation of it.
    """

    def __init__(self, A: np.ndarray, B: np.ndarray, h: float, substeps: int = 1):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.h = float(h)
        self.substeps = int(substeps)
        n, m = self.B.shape
        cols = []
        for j in range(n + 2 * m):
            z = np.zeros(n + 2 * m)
            z[j] = 1.0
            cols.append(self._compose(z[:n], z[n:n + m], z[n + m:]))
        M = np.column_stack(cols)
        self.phi = M[:, :n]
        self.g0 = M[:, n:n + m]
        self.g1 = M[:, n + m:]
        # row-wise coefficient lists for the scalar fast path
        self._rows = [list(map(float, row)) for row in np.hstack([self.phi, self.g0, self.g1])]

    def _compose(self, y, u0, u1):
        N = self.substeps
        hs = self.h / N
        for j in range(N):
            ua = u0 + (u1 - u0) * (j / N)
            ub = u0 + (u1 - u0) * ((j + 1) / N)
            u = _ramp(ua, ub, 0.0, hs)
            y = rk4_step(lambda t, y: self.A @ y + self.B @ u(t), 0.0, y, hs)
        return y

    def __call__(self, y: np.ndarray, u0, u1) -> np.ndarray:
        return self.phi @ y + self.g0 @ np.atleast_1d(u0) + self.g1 @ np.atleast_1d(u1)

    def apply(self, y: list, u0: list, u1: list) -> list:
        """Same update as ``__call__`` on plain float lists (no numpy overhead)."""
        z = y + u0 + u1
        return [sum(c * v for c, v in zip(row, z)) for row in self._rows]

    def partial(self, y: np.ndarray, u0, u1, t0: float, t1: float) -> np.ndarray:
        """Plain RK4 over ``[t0, t1]`` inside a step whose input ramps u0 -> u1."""
        u = _ramp(u0, u1, 0.0, self.h)
        return rk4_step(lambda t, y: self.A @ y + self.B @ u(t), t0, y, t1 - t0)


@dataclass
class StopEvent:
    time: float
    v_before: float
    v_after: float


class _StopHandler:
    """Micro-step event detection for mass 1 against the stop.

    A macro step whose end point stays clear of the stop by ``guard`` metres is
    taken in one composed update; otherwise it is redone micro step by micro
    step, and the crossing inside the offending micro step is located by linear
    interpolation before clamping and reflecting.
    """

    guard = 1e-4

    def __init__(self, micro: AffineStepper, index: int, stop: StopParams):
        self.micro = micro
        self.i = index
        self.stop = stop

    def needs_fine(self, y0: np.ndarray, y1: np.ndarray) -> bool:
        return min(y0[self.i], y1[self.i]) < self.stop.x_stop + self.guard

    def fine(self, y: np.ndarray, u0, u1, t0: float, n: int, events: list) -> np.ndarray:
        u0 = np.atleast_1d(np.asarray(u0, dtype=float))
        u1 = np.atleast_1d(np.asarray(u1, dtype=float))
        h = self.micro.h
        xs = self.stop.x_stop
        i = self.i
        for j in range(n):
            ua = u0 + (u1 - u0) * (j / n)
            ub = u0 + (u1 - u0) * ((j + 1) / n)
            y_new = self.micro(y, ua, ub)
            if y_new[i] < xs:
                theta = (y[i] - xs) / (y[i] - y_new[i]) if y[i] > xs else 0.0
                y_hit = self.micro.partial(y, ua, ub, 0.0, theta * h) if theta > 0 else y.copy()
                v_before = float(y_hit[i + 1])
                hit = apply_stop_event(MassState(float(y_hit[i]), v_before), self.stop)
                y_hit[i], y_hit[i + 1] = hit.x, hit.v
                events.append(StopEvent(t0 + (j + theta) * h, v_before, hit.v))
                y_new = self.micro.partial(y_hit, ua, ub, theta * h, h) if theta < 1 else y_hit
                if y_new[i] < xs:
                    # grazing contact: stays clamped
                    y_new[i] = xs
                    y_new[i + 1] = max(float(y_new[i + 1]), 0.0)
            y = y_new
        return y


class Mass1Plant:
    """Mass-1 half: input is the coupling force reported by the other side."""

    name = "mass1"
    input_names = ("F",)
    output_names = ("x1", "v1")
    feedthrough = False

    def __init__(self, params: OscillatorParams, x0: float, v0: float, macro_step: float,
                 micro_steps: int = 10, stop: Optional[StopParams] = None):
        self.params = params
        self.stop = stop
        self.micro_steps = micro_steps
        A, B = mass1_rhs(params)
        self.macro = AffineStepper(A, B, macro_step, micro_steps)
        self._stop = None
        if stop is not None:
            self._stop = _StopHandler(AffineStepper(A, B, macro_step / micro_steps), 0, stop)
        self.y = [float(x0), float(v0)]
        self.events: list[StopEvent] = []

    @property
    def state(self) -> list:
        return self.y

    def output(self, u=None) -> list:
        return list(self.y)

    def advance(self, t: float, u_start, u_end):
        y1 = self.macro.apply(self.y, u_start, u_end)
        if self._stop is not None and self._stop.needs_fine(self.y, y1):
            y1 = self._stop.fine(np.array(self.y), u_start, u_end, t, self.micro_steps, self.events)
            y1 = [float(v) for v in y1]
        self.y = y1


class Mass2Plant:
    """Mass-2 half: receives (x1, v1), returns the coupling force."""

    name = "mass2"
    input_names = ("x1", "v1")
    output_names = ("F",)
    feedthrough = True

    def __init__(self, params: OscillatorParams, x0: float, v0: float, macro_step: float,
                 micro_steps: int = 10):
        self.params = params
        A, B = mass2_rhs(params)
        self.macro = AffineStepper(A, B, macro_step, micro_steps)
        self.y = [float(x0), float(v0)]
        self.events: list[StopEvent] = []

    @property
    def state(self) -> list:
        return self.y

    def output(self, u) -> list:
        p = self.params
        return [p.cc * (u[0] - self.y[0]) + p.dc * (u[1] - self.y[1])]

    def advance(self, t: float, u_start, u_end):
        self.y = self.macro.apply(self.y, list(u_start), list(u_end))


@dataclass
class MonolithicResult:
    time: np.ndarray
    states: np.ndarray
    events: list = field(default_factory=list)


def run_monolithic(params: OscillatorParams, x0: Sequence[float], duration: float,
                   stop: Optional[StopParams] = None, macro_step: float = 1e-3,
                   micro_steps: int = 10) -> MonolithicResult:
    """Integrate the uncut oscillator; states are recorded every ``macro_step``.

    ``x0`` is ordered (x1, x2, v1, v2) as in the usual initial-condition
    notation; the returned state columns are (x1, v1, x2, v2).
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    x1, x2, v1, v2 = (float(v) for v in x0)
    A = monolithic_matrix(params)
    B = np.zeros((4, 1))
    stepper = AffineStepper(A, B, macro_step, micro_steps)
    handler = None
    if stop is not None:
        handler = _StopHandler(AffineStepper(A, B, macro_step / micro_steps), 0, stop)
    n = int(round(duration / macro_step))
    out = np.empty((n + 1, 4))
    y = np.array([x1, v1, x2, v2])
    out[0] = y
    phi = stepper.phi
    events: list[StopEvent] = []
    zero = np.zeros(1)
    for i in range(n):
        y1 = phi @ y
        if handler is not None and handler.needs_fine(y, y1):
            y1 = handler.fine(y, zero, zero, i * macro_step, micro_steps, events)
        y = y1
        out[i + 1] = y
    return MonolithicResult(np.arange(n + 1) * macro_step, out, events)


def modal_frequencies(params: OscillatorParams) -> np.ndarray:
    """Damped natural frequencies (rad/s) of the uncut oscillator, ascending."""
    lam = np.linalg.eigvals(monolithic_matrix(params))
    return np.sort(np.abs(lam.imag[lam.imag > 0]))


def mechanical_energy(params: OscillatorParams, x1, v1, x2, v2):
    p = params
    return 0.5 * (p.m1 * np.square(v1) + p.m2 * np.square(v2) + p.c1 * np.square(x1)
                  + p.c2 * np.square(x2) + p.cc * np.square(np.subtract(x1, x2)))


def is_finite_state(y: np.ndarray) -> bool:
    return all(math.isfinite(v) for v in y)
