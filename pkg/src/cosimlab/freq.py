"""Frequency-domain model of the delayed, compensated coupling and of the coupled loop.

Coupling process from a continuous output y to the applied input u_hat:

    G_f(s) = exp(-s tau) / dT                                 (sampling + delay)
    G_c(s) = sum_n a[n] exp(-n s dT) Z(s) + b exp(-s dT) Z(s)   (AR + ZOH)
    Z(s)   = (1 - exp(-s dT)) / s

so that ``G_p = G_f * G_c``.  The bias enters through the same hold kernel as
a coefficient one sample older than the newest, which keeps ``s = 0``
removable and gives ``G_p(0) = sum(a) + b``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .compensator import ExtrapolatorParams
from .plants import OscillatorParams

_SMALL = 1e-6


def hold_kernel(s, dT: float):
    """``(1 - exp(-s dT)) / (s dT)`` with its limit 1 at ``s = 0``."""
    x = np.asarray(s, dtype=complex) * dT
    small = np.abs(x) < _SMALL
    safe = np.where(small, 1.0, x)
    series = 1.0 - x / 2.0 + x * x / 6.0
    return np.where(small, series, -np.expm1(-safe) / safe)


def eval_Gf(w, dT: float, tau: float):
    s = 1j * np.asarray(w, dtype=float)
    return np.exp(-s * tau) / dT


def _ar_sum(s, params: ExtrapolatorParams, dT: float):
    lags = np.arange(params.p)
    terms = np.exp(-np.multiply.outer(s, lags * dT)) @ params.a
    return terms + params.b * np.exp(-s * dT)


def eval_Gc(w, params: ExtrapolatorParams, dT: float):
    s = 1j * np.asarray(w, dtype=float)
    return _ar_sum(s, params, dT) * hold_kernel(s, dT) * dT


def eval_Gp(w, params: Optional[ExtrapolatorParams], dT: float, tau: float):
    """Overall coupling process; ``params=None`` gives the ideal ``G_p = 1``."""
    w = np.asarray(w, dtype=float)
    if params is None:
        return np.ones_like(w, dtype=complex)
    s = 1j * w
    return np.exp(-s * tau) * _ar_sum(s, params, dT) * hold_kernel(s, dT)


@dataclass
class PlantTransfer:
    """Rational transfer function, coefficients in descending powers of s."""

    num: np.ndarray
    den: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.num = np.trim_zeros(np.atleast_1d(np.asarray(self.num, dtype=float)), "f")
        self.den = np.trim_zeros(np.atleast_1d(np.asarray(self.den, dtype=float)), "f")
        if self.num.size == 0:
            self.num = np.zeros(1)

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def freq(self, w):
        return self(1j * np.asarray(w, dtype=float))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.num)

    @property
    def relative_degree(self) -> int:
        return (self.den.size - 1) - (self.num.size - 1)


def derive_plant_tf(params: OscillatorParams):
    """Transfer functions of the two halves.

    ``G_mass1``: force acting on mass 1 -> x1.  ``G_mass2``: received x1 ->
    coupling force, with mass 2 moving under that force.  Mass 1 feels the
    reaction of the coupling force, so the loop is closed with negative
    feedback: ``1 + G_mass2 * G_p * G_mass1 * G_p = 0``.
    """
    p = params
    g1 = PlantTransfer([1.0], [p.m1, p.d1, p.c1], "G_mass1")
    k = np.array([p.dc, p.cc])
    own = np.array([p.m2, p.d2, p.c2])
    den2 = np.polyadd(own, k)
    g2 = PlantTransfer(np.polymul(k, own), den2, "G_mass2")
    return g1, g2


def closed_loop_poles(params: OscillatorParams) -> np.ndarray:
    """Roots of ``den1 * den2 + num1 * num2`` for the undelayed loop."""
    g1, g2 = derive_plant_tf(params)
    char = np.polyadd(np.polymul(g1.den, g2.den), np.polymul(g1.num, g2.num))
    return np.roots(char)


def eval_open_loop(w, plants, params: Optional[ExtrapolatorParams], dT: float, tau: float):
    g1, g2 = plants
    gp = eval_Gp(w, params, dT, tau)
    return g2.freq(w) * gp * g1.freq(w) * gp


@dataclass
class FrequencyResponseCurve:
    omega: np.ndarray
    values: np.ndarray
    label: str = ""

    @property
    def magnitude_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.values))

    @property
    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.unwrap(np.angle(self.values)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["omega", "re", "im", "mag_db", "phase_deg"])
            for row in zip(self.omega, self.values.real, self.values.imag, self.magnitude_db, self.phase_deg):
                wr.writerow([f"{v:.12g}" for v in row])


def log_grid(w_lo: float, w_hi: float, n: int = 2000) -> np.ndarray:
    if not 0 < w_lo < w_hi:
        raise ValueError("need 0 < w_lo < w_hi")
    return np.logspace(math.log10(w_lo), math.log10(w_hi), n)


def sample_curve(fn: Callable, w_lo: float, w_hi: float, n: int = 2000, critical: complex = -1.0,
                 max_turn: float = math.pi / 8, max_points: int = 2_000_000, label: str = "") -> FrequencyResponseCurve:
    """Evaluate ``fn`` on a log grid, refined where the locus swings around ``critical``.

    Any segment along which ``arg(fn - critical)`` turns by more than
    ``max_turn`` is bisected (in log frequency) until it does not, so the
    winding number is not aliased by lightly damped resonances.  The densest
    stretch is additionally refined tenfold around the closest approach.
    """
    w = log_grid(w_lo, w_hi, n)
    g = fn(w)
    while w.size < max_points:
        turn = np.abs(np.diff(np.angle(g - critical)))
        turn = np.minimum(turn, 2 * np.pi - turn)
        bad = np.nonzero(turn > max_turn)[0]
        if bad.size == 0:
            break
        mids = np.sqrt(w[bad] * w[bad + 1])
        w = np.insert(w, bad + 1, mids)
        g = np.insert(g, bad + 1, fn(mids))
    i = int(np.argmin(np.abs(g - critical)))
    lo, hi = w[max(i - 1, 0)], w[min(i + 1, w.size - 1)]
    if hi > lo:
        extra = np.geomspace(lo, hi, 12)[1:-1]
        w = np.concatenate([w, extra])
        g = np.concatenate([g, fn(extra)])
        order = np.argsort(w)
        w, g = w[order], g[order]
    return FrequencyResponseCurve(w, g, label)


@dataclass
class NyquistVerdict:
    verdict: str
    encirclements: int
    winding: float
    min_distance: float

    @property
    def unstable_poles(self) -> int:
        # open loop has no right-half-plane poles: Z = -N (N counter-clockwise)
        return -self.encirclements


def nyquist_verdict(curve: FrequencyResponseCurve, critical: complex = -1.0 + 0.0j,
                    eps: float = 1e-3) -> NyquistVerdict:
    """Winding of the full locus (negative frequencies mirrored) around ``critical``.

    Counter-clockwise encirclements count positive.  With a stable open loop,
    zero net encirclement means a stable closed loop.
    """
    g = np.asarray(curve.values)
    full = np.concatenate([np.conj(g[::-1]), g, np.conj(g[-1:])])
    d = full - critical
    turn = np.angle(d[1:] / d[:-1])
    winding = float(turn.sum() / (2 * np.pi))
    n = int(round(winding))
    dist = float(np.min(np.abs(g - critical)))
    if dist < eps:
        verdict = "marginal"
    else:
        verdict = "stable" if n == 0 else "unstable"
    return NyquistVerdict(verdict, n, winding, dist)


def open_loop_curve(plants, params: Optional[ExtrapolatorParams], dT: float, tau: float,
                    w_lo: float = 1e-2, w_hi: Optional[float] = None, n: int = 2000,
                    label: str = "") -> FrequencyResponseCurve:
    w_hi = 2 * np.pi / dT if w_hi is None else w_hi
    return sample_curve(lambda w: eval_open_loop(w, plants, params, dT, tau), w_lo, w_hi, n, label=label)


@dataclass
class AliasingCheck:
    ratio: float
    margin: float
    ok: bool


def aliasing_check(w_band_max: float, dT: float, margin: float = math.pi / 100) -> AliasingCheck:
    if w_band_max <= 0:
        raise ValueError("band edge must be positive")
    ratio = w_band_max * dT
    return AliasingCheck(ratio, margin, ratio < margin)


class OracleError(RuntimeError):
    pass


def _projection(w: float, dT: float, values: np.ndarray, n0: int, n1: int) -> complex:
    """``(2/T) * integral of u_hat(t) exp(-j w t)`` over held samples n0..n1-1."""
    n = np.arange(n0, n1)
    t0 = n * dT
    seg = (np.exp(-1j * w * t0) - np.exp(-1j * w * (t0 + dT))) / (1j * w)
    T = (n1 - n0) * dT
    return complex(2.0 / T * np.sum(values[n0:n1] * seg))


def empirical_frequency_response(params: ExtrapolatorParams, dT: float, k: int, w: float,
                                 periods: int = 4, min_samples: int = 4000) -> complex:
    """Gain of the sampled chain measured by driving it with a unit sine.

    Chain: sample ``sin(w t)`` every ``dT`` -> delay ``k`` samples -> AR
    extrapolation -> zero-order hold.  The held output is projected onto
    ``exp(j w t)`` over a whole number of input periods after the start-up
    transient.
    """
    if w == 0:
        return complex(params.dc_gain)
    if not 0 < w * dT < math.pi:
        raise OracleError("frequency must satisfy 0 < w*dT < pi")
    per = 2 * math.pi / w / dT
    m = max(periods, int(math.ceil(min_samples / per)))

    def gain(m_periods: int) -> complex:
        start = k + params.p
        start = int(math.ceil(math.ceil(start / per) * per))
        n_win = int(round(m_periods * per))
        n_total = start + n_win + 1
        idx = np.arange(n_total)
        u = np.sin(w * idx * dT)
        lagged = np.stack([np.concatenate([np.zeros(k + j), u[:n_total - k - j]]) for j in range(params.p)])
        out = params.a @ lagged + params.b
        c = _projection(w, dT, out, start, start + n_win)
        # input sin(w t) has complex coefficient -j on exp(j w t)
        return c / (-1j)

    g1 = gain(m)
    g2 = gain(m + 1)
    if abs(g1 - g2) > 1e-3 * max(abs(g1), 1e-12) + 1e-9:
        raise OracleError(f"projection did not settle at w={w}: {g1} vs {g2}")
    return g2
