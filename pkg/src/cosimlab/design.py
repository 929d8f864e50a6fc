"""Choose extrapolation coefficients from bandwidth, relative degree, dT and tau alone.

The objective rates the coupling process ``G_p`` on one frequency grid:

* ``J_a``: band average of ``| 1 - |G_p| |``,
* ``J_p``: band average of ``|arg G_p|`` in degrees, so that ``alpha = 100 beta``
  weighs 1 degree of phase like 1 % of magnitude,
* ``J_r``: magnitude excess above 1 below the band plus excess above
  ``(w / w_max)**v`` from the band up to ``2 pi / dT``.

``b`` is eliminated through ``b = 1 - sum(a)``, which keeps the constant-signal
constraint exact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize

from .compensator import ExtrapolatorParams
from .freq import hold_kernel

log = logging.getLogger(__name__)


@dataclass
class DesignSpec:
    band: tuple = (1.0, 6.0)
    relative_degree: int = 2
    alpha: float = 100.0
    beta: float = 1.0
    gamma: float = 1e4
    p: int = 4
    macro_step: float = 1e-3
    delay: float = 3e-3
    exponent: Optional[float] = None
    grid_points: int = 2000
    grid_min: float = 1e-2

    def __post_init__(self):
        lo, hi = self.band
        self.band = (float(lo), float(hi))
        if not 0 <= lo < hi:
            raise ValueError("band must satisfy 0 <= w_min < w_max")
        if hi >= 2 * math.pi / self.macro_step:
            raise ValueError("band must end below 2 pi / dT")
        if self.relative_degree < 1:
            raise ValueError("relative degree must be a positive integer")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("weights must be nonnegative")

    @property
    def v(self) -> float:
        return 1.0 / (2 * self.relative_degree) if self.exponent is None else self.exponent

    @property
    def w_nyquist(self) -> float:
        return 2 * math.pi / self.macro_step


@dataclass
class ObjectiveBreakdown:
    J_a: float
    J_p: float
    J_r: float
    J_total: float


class _Grid:
    """Frequency nodes and precomputed lag kernels for one spec."""

    def __init__(self, spec: DesignSpec):
        lo, hi = spec.band
        top = spec.w_nyquist
        w = np.logspace(math.log10(spec.grid_min), math.log10(top), spec.grid_points)
        w = np.unique(np.concatenate([[0.0], w, [lo, hi, top]]))
        w = w[w <= top]
        self.w = w
        self.in_band = (w >= lo) & (w <= hi)
        self.below = w <= lo
        self.above = w >= hi
        s = 1j * w
        dT = spec.macro_step
        common = np.exp(-s * spec.delay) * hold_kernel(s, dT)
        lags = np.exp(-np.multiply.outer(s, np.arange(spec.p) * dT))
        self.kern_a = lags * common[:, None]
        self.kern_b = np.exp(-s * dT) * common
        self.bound = (w / hi) ** spec.v
        self.spec = spec

    def gp(self, a: np.ndarray, b: float) -> np.ndarray:
        return self.kern_a @ a + b * self.kern_b


def _breakdown(grid: _Grid, g: np.ndarray) -> ObjectiveBreakdown:
    spec = grid.spec
    lo, hi = spec.band
    w = grid.w
    mag = np.abs(g)
    m = grid.in_band
    width = hi - lo
    J_a = trapezoid(np.abs(1.0 - mag[m]), w[m]) / width
    J_p = trapezoid(np.degrees(np.abs(np.angle(g[m]))), w[m]) / width
    J_r = 0.0
    if lo > 0:
        b = grid.below
        J_r += trapezoid(np.maximum(mag[b] - 1.0, 0.0), w[b])
    a = grid.above
    J_r += trapezoid(np.maximum(mag[a] - grid.bound[a], 0.0), w[a])
    total = spec.alpha * J_a + spec.beta * J_p + spec.gamma * J_r
    return ObjectiveBreakdown(float(J_a), float(J_p), float(J_r), float(total))


def objective(params: ExtrapolatorParams, spec: DesignSpec, grid: Optional[_Grid] = None) -> ObjectiveBreakdown:
    if params.p != spec.p:
        raise ValueError(f"params have p={params.p}, spec expects {spec.p}")
    grid = grid or _Grid(spec)
    return _breakdown(grid, grid.gp(params.a, params.b))


def ideal_breakdown(spec: DesignSpec) -> ObjectiveBreakdown:
    """Objective of a hypothetical ``G_p == 1``."""
    grid = _Grid(spec)
    return _breakdown(grid, np.ones_like(grid.w, dtype=complex))


def band_errors(params: ExtrapolatorParams, spec: DesignSpec, n: int = 2001):
    """Max in-band ``|arg G_p|`` (degrees) and ``| |G_p| - 1 |``."""
    from .freq import eval_Gp
    w = np.linspace(*spec.band, n)
    g = eval_Gp(w, params, spec.macro_step, spec.delay)
    return float(np.degrees(np.abs(np.angle(g))).max()), float(np.abs(np.abs(g) - 1).max())


def canonical(params: ExtrapolatorParams) -> ExtrapolatorParams:
    """Fold the bias into the second coefficient.

    In the frequency model the bias shares the kernel of ``a[1]``, so the move
    leaves ``G_p`` and the constraint unchanged.
    """
    if params.p < 2 or params.b == 0.0:
        return params
    a = params.a.copy()
    a[1] += params.b
    return ExtrapolatorParams(a, 0.0)


@dataclass
class DesignResult:
    params: ExtrapolatorParams
    breakdown: ObjectiveBreakdown
    init_breakdown: ObjectiveBreakdown
    improved: bool
    starts: list = field(default_factory=list)


def default_starts(spec: DesignSpec, n_starts: int, rng) -> list:
    p = spec.p
    k = spec.delay / spec.macro_step
    starts = [ExtrapolatorParams.zoh(p).a]
    if p >= 2:
        foh = np.zeros(p)
        foh[0], foh[1] = 1 + k, -k
        starts.append(foh)
    while len(starts) < n_starts:
        starts.append(rng.normal(0.0, 4.0, p))
    return starts[:n_starts]


def optimize(spec: DesignSpec, init: Optional[ExtrapolatorParams] = None, n_starts: int = 20,
             seed: int = 0, maxiter: int = 6000, polish: int = 10) -> DesignResult:
    """Multi-start Nelder-Mead on ``a`` with ``b = 1 - sum(a)``.

    Returns ``init`` itself (``improved=False``) when no start beats it.
    """
    grid = _Grid(spec)
    init = init or ExtrapolatorParams.zoh(spec.p)
    if abs(init.dc_gain - 1.0) > 1e-9:
        raise ValueError("init must satisfy sum(a) + b = 1")
    init_bd = objective(init, spec, grid)

    def J(a):
        return _breakdown(grid, grid.gp(a, 1.0 - a.sum())).J_total

    def local(x0):
        return minimize(J, np.asarray(x0, dtype=float), method="Nelder-Mead",
                        options={"maxiter": maxiter, "maxfev": maxiter, "xatol": 1e-10,
                                 "fatol": 1e-14, "adaptive": True})

    rng = np.random.default_rng(seed)
    best_a, best_J = init.a.copy(), init_bd.J_total
    record = []
    for x0 in [init.a] + default_starts(spec, n_starts, rng):
        res = local(x0)
        record.append((float(res.fun), res.x.copy()))
        if res.fun < best_J:
            best_a, best_J = res.x.copy(), float(res.fun)
    # a collapsed simplex stalls on the kinks of the objective; restarting it
    # from the incumbent usually moves on
    for _ in range(polish):
        res = local(best_a)
        if not res.fun < best_J * (1 - 1e-9):
            break
        best_a, best_J = res.x.copy(), float(res.fun)
    if best_J >= init_bd.J_total:
        log.warning("design did not improve on the initial coefficients")
        return DesignResult(init, init_bd, init_bd, False, record)
    result = canonical(ExtrapolatorParams(best_a, 1.0 - best_a.sum()))
    return DesignResult(result, objective(result, spec, grid), init_bd, True, record)
