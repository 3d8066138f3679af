"""Time-dependent decay rate ``gamma(t)`` and level shift ``S(t)``.

For a two-level atom coupled to the vacuum the exact time-local equation has

    gamma(t) + i S(t) = -2 (dc1/dt) / c1.

Expanding in the coupling with the complex kernel ``k = (Phi + i Psi)/2``
gives the TCL rates

    (gamma + i S)^(2)(t) = 2 kappa2,   kappa2 = integral_0^t k(s) ds,
    (gamma + i S)^(4)(t) = 2 (kappa2 + kappa4),
    kappa4 = int_0^t dt1 int_0^t1 dt2 int_0^t2 dt3
             [k(t - t2) k(t1 - t3) + k(t - t3) k(t1 - t2)].

Written with ``Phi`` and ``Psi`` the real part of the triple integrand reads
``Phi Phi - Psi Psi`` and the imaginary part ``Phi Psi + Psi Phi``. The
closed forms below for the resonant and detuned Jaynes-Cummings models are
the exact values of these integrals.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve

from . import models, oracle
from .errors import ModelError, QuadratureError, RateDivergenceError
from .models import BandGap, Custom, DetunedJC, ModelSpec, ResonantJC

DEFAULT_HORIZON = 10.0


class RateMethod(str, enum.Enum):
    EXACT = "exact"
    TCL2 = "tcl2"
    TCL4 = "tcl4"
    MARKOV = "markov"
    GME = "gme"


class RatePair(NamedTuple):
    gamma: float | np.ndarray
    shift: float | np.ndarray


def canonical(m: ModelSpec) -> ModelSpec:
    """Map a detuned model with zero detuning onto the resonant one."""
    if isinstance(m, DetunedJC) and m.delta == 0:
        return ResonantJC(m.gamma0, m.lam)
    return m


def _times(t):
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0) or not np.all(np.isfinite(tt)):
        raise ValueError("rates are defined for finite t >= 0")
    return tt


def _pair(gamma, shift, like) -> RatePair:
    if np.ndim(like) == 0:
        return RatePair(float(gamma), float(shift))
    return RatePair(np.asarray(gamma, dtype=float), np.asarray(shift, dtype=float))


# -------------------------------------------------------------- Markov


def markov_rate(m: ModelSpec) -> RatePair:
    """Markov limits ``gamma_M = int_0^inf Phi``, ``S_M = int_0^inf Psi``."""
    m = canonical(m)
    if isinstance(m, ResonantJC):
        return RatePair(float(m.gamma0), 0.0)
    if isinstance(m, DetunedJC):
        pre = m.gamma0 * m.lam / (m.lam**2 + m.delta**2)
        return RatePair(pre * m.lam, pre * m.delta)
    if isinstance(m, BandGap):
        return RatePair(4 * m.omega0**2 * (m.w1 / m.gamma1 - m.w2 / m.gamma2), 0.0)
    if max(abs(m.phi[-1]), abs(m.psi[-1])) > 1e-12:
        raise ModelError("custom correlation table has not decayed below 1e-12 at its end")
    return RatePair(*(float(x) for x in _custom_integral(m, m.t_max)))


# -------------------------------------------------------------- second order


def _custom_integral(m: Custom, t):
    """Exact integral of the piecewise-linear tables from 0 to ``t``."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt > m.t_max * (1 + 1e-12)):
        raise ModelError(f"t beyond the tabulated range [0, {m.t_max:g}] of a custom model")
    out = []
    for table in (m.phi, m.psi):
        cum = np.concatenate([[0.0], np.cumsum(0.5 * m.h * (table[1:] + table[:-1]))])
        k = np.minimum((tt / m.h).astype(int), table.size - 2)
        frac = np.clip(tt - k * m.h, 0.0, m.h)
        slope = (table[k + 1] - table[k]) / m.h
        out.append(cum[k] + table[k] * frac + 0.5 * slope * frac**2)
    return out[0], out[1]


def tcl2_rate(m: ModelSpec, t) -> RatePair:
    """Second-order rate ``int_0^t Phi`` and shift ``int_0^t Psi``."""
    m = canonical(m)
    tt = _times(t)
    if isinstance(m, ResonantJC):
        return _pair(-m.gamma0 * np.expm1(-m.lam * tt), np.zeros_like(tt), t)
    if isinstance(m, DetunedJC):
        lam, delta = m.lam, m.delta
        e = np.exp(-lam * tt)
        c, s = np.cos(delta * tt), np.sin(delta * tt)
        pre = m.gamma0 * lam / (lam**2 + delta**2)
        gamma = pre * (lam * (1 - e * c) + delta * e * s)
        shift = pre * (delta * (1 - e * c) - lam * e * s)
        return _pair(gamma, shift, t)
    if isinstance(m, BandGap):
        g1 = m.w1 * 2 / m.gamma1 * -np.expm1(-0.5 * m.gamma1 * tt)
        g2 = m.w2 * 2 / m.gamma2 * -np.expm1(-0.5 * m.gamma2 * tt)
        return _pair(2 * m.omega0**2 * (g1 - g2), np.zeros_like(tt), t)
    gamma, shift = _custom_integral(m, tt)
    return _pair(gamma, shift, t)


# -------------------------------------------------------------- fourth order


def _tcl4_resonant(m: ResonantJC, tt):
    x = m.lam * tt
    # exp(-x) (sinh x - x), written to avoid overflow at large x
    corr = -0.5 * np.expm1(-2 * x) - x * np.exp(-x)
    return -m.gamma0 * np.expm1(-x) + m.gamma0**2 / m.lam * corr


def _tcl4_detuned(m: DetunedJC, tt):
    g0, lam, delta = m.gamma0, m.lam, m.delta
    l2 = lam**2 + delta**2
    e = np.exp(-lam * tt)
    c, s = np.cos(delta * tt), np.sin(delta * tt)
    c2, s2 = np.cos(2 * delta * tt), np.sin(2 * delta * tt)
    gamma2, shift2 = tcl2_rate(m, tt)
    ring = 1 - e**2 * c2
    gamma_corr = (
        lam**2 * (lam**2 - 3 * delta**2) * ring
        - 2 * lam * (lam**4 - delta**4) * tt * e * c
        + 4 * lam**2 * delta * l2 * tt * e * s
        + lam * delta * (3 * lam**2 - delta**2) * e**2 * s2
    )
    shift_corr = (
        delta * (delta**2 - 3 * lam**2) * ring
        - 2 * (delta**4 - lam**4) * tt * e * s
        + 4 * lam * delta * l2 * tt * e * c
        - lam * (3 * delta**2 - lam**2) * e**2 * s2
    )
    gamma = gamma2 + g0**2 * lam / (2 * l2**3) * gamma_corr
    shift = shift2 - g0**2 * lam**2 / (2 * l2**3) * shift_corr
    return gamma, shift


def _kappa4_triangle(m: ModelSpec, t: float, n: int) -> complex:
    """Iterated trapezoid for ``kappa4(t)`` on an ``n``-interval uniform grid."""
    h = t / n
    s = h * np.arange(n + 1)
    f = models.kernel(m, s)
    big_f = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))])
    i, j = np.tril_indices(n + 1)
    # t1 = s_i, t2 = s_j; the t3 integrals are differences of the cumulative F
    g = f[n - j] * (big_f[i] - big_f[i - j]) + f[i - j] * (big_f[n] - big_f[n - j])
    rows = np.arange(n + 1)
    row_start = rows * (rows + 1) // 2
    row_sum = np.add.reduceat(g, row_start)
    first = g[row_start]
    last = g[row_start + rows]
    inner = h * (row_sum - 0.5 * (first + last))
    return complex(h * (inner.sum() - 0.5 * (inner[0] + inner[-1])))


def tcl4_quadrature(m: ModelSpec, t, rtol: float = 1e-3, n_max: int = 2048) -> RatePair:
    """Fourth-order rate from the generic triple quadrature.

    The grid on ``[0, t]`` doubles until two successive estimates of the
    complex rate differ by less than ``rtol`` relative; past ``n_max``
    intervals a ``QuadratureError`` is raised.
    """
    tt = _times(t)
    flat = tt.ravel()
    gamma2, shift2 = tcl2_rate(m, flat)
    gamma2, shift2 = np.atleast_1d(gamma2), np.atleast_1d(shift2)
    out = np.empty(flat.size, dtype=np.complex128)
    scale = models.time_scale(m)
    for k, tk in enumerate(flat):
        base = gamma2[k] + 1j * shift2[k]
        if tk == 0:
            out[k] = 0.0
            continue
        n = int(2 ** np.ceil(np.log2(max(64.0, 8 * tk / scale))))
        n = min(n, n_max)
        prev = base + 2 * _kappa4_triangle(m, tk, n)
        while True:
            if 2 * n > n_max:
                raise QuadratureError(
                    f"fourth-order quadrature at t = {tk:g} not converged with n = {n}"
                )
            n *= 2
            cur = base + 2 * _kappa4_triangle(m, tk, n)
            if abs(cur - prev) <= rtol * max(abs(cur), 1e-12):
                break
            prev = cur
        out[k] = cur
    out = out.reshape(tt.shape)
    return _pair(out.real, out.imag, t)


def tcl4_on_grid(m: ModelSpec, grid) -> RatePair:
    """Fourth-order rate on a uniform grid from 0, by an O(n log n) route.

    Integrating out ``t3`` and ``t1`` turns the triple integral into

        kappa4(t) = I(t) F(t) - integral_0^t k(t - s) I(s) ds,

    with ``F`` the running integral of ``k`` and ``I`` that of ``F``. The
    remaining convolution is done with the trapezoid rule, so the error is
    second order in the grid step.
    """
    m = canonical(m)
    grid = np.asarray(grid, dtype=float)
    oracle._uniform_step(grid)
    if isinstance(m, ResonantJC):
        return RatePair(_tcl4_resonant(m, grid), np.zeros_like(grid))
    if isinstance(m, DetunedJC):
        return RatePair(*_tcl4_detuned(m, grid))
    if grid.size == 1:
        return RatePair(np.zeros(1), np.zeros(1))
    h = grid[1] - grid[0]
    f = models.kernel(m, grid)
    big_f = cumulative_trapezoid(f, dx=h, initial=0.0)
    big_i = cumulative_trapezoid(big_f, dx=h, initial=0.0)
    conv = fftconvolve(f, big_i)[: grid.size]
    conv = h * (conv - 0.5 * (f * big_i[0] + f[0] * big_i))
    kappa4 = big_i * big_f - conv
    gamma2, shift2 = tcl2_rate(m, grid)
    return RatePair(gamma2 + 2 * kappa4.real, shift2 + 2 * kappa4.imag)


def tcl4_rate(m: ModelSpec, t, rtol: float = 1e-3, n_max: int = 2048) -> RatePair:
    """Fourth-order TCL rate and shift.

    Closed forms for the Jaynes-Cummings models, the generic triple
    quadrature (``tcl4_quadrature``) for the band-gap and tabulated models.
    """
    m = canonical(m)
    tt = _times(t)
    if isinstance(m, ResonantJC):
        return _pair(_tcl4_resonant(m, tt), np.zeros_like(tt), t)
    if isinstance(m, DetunedJC):
        return _pair(*_tcl4_detuned(m, tt), t)
    return tcl4_quadrature(m, t, rtol, n_max)


# -------------------------------------------------------------- exact and GME


def exact_rate(m: ModelSpec, t) -> RatePair:
    """Exact rate ``-2 Re(dc1/c1)`` and shift ``-2 Im(dc1/c1)``.

    Raises ``RateDivergenceError`` at or after the first zero of ``c1``,
    and wherever ``|c1| <= 1e-12``.
    """
    m = canonical(m)
    tt = _times(t)
    if isinstance(m, Custom):
        raise ModelError("tabulated models have no exact rate")
    t_top = float(np.max(tt)) if tt.size else 0.0
    t0 = oracle.first_amplitude_zero(m, t_top)
    if t0 is not None:
        raise RateDivergenceError(t0)
    c1, dc1 = oracle.amplitude_and_derivative(m, tt)
    small = np.abs(c1) <= oracle.AMPLITUDE_EPS
    if np.any(small):
        raise RateDivergenceError(float(np.min(tt[small])))
    if isinstance(m, ResonantJC):
        return _pair(oracle._resonant_rate(m, tt), np.zeros_like(tt), t)
    z = -2 * dc1 / c1
    return _pair(z.real, z.imag, t)


def gme_rate(m: ModelSpec, t) -> RatePair:
    """Rate ``-d ln(rho11)/dt`` of the second-order Born equation (resonant only)."""
    m = canonical(m)
    if not isinstance(m, ResonantJC):
        raise ModelError("the Born GME rate is available for the resonant model only")
    tt = _times(t)
    tz = oracle.gme_zero_time(m)
    if tz is not None and tt.size and np.max(tt) >= tz:
        raise RateDivergenceError(tz, f"Born GME population vanishes at t = {tz:.10g}")
    d = oracle._resonant_d(m, 4.0)
    x = 0.5 * d * tt
    num = m.gamma0 * m.lam * tt * oracle.sinhc(x)
    den = np.cosh(x) + 0.5 * m.lam * tt * oracle.sinhc(x)
    return _pair((num / den).real, np.zeros_like(tt), t)


def divergence_time(m: ModelSpec, method, horizon: float) -> float | None:
    """First time ``<= horizon`` where the method's rate stops existing."""
    method = RateMethod(method)
    if method is RateMethod.EXACT:
        return oracle.first_amplitude_zero(canonical(m), horizon)
    if method is RateMethod.GME:
        tz = oracle.gme_zero_time(m)
        return tz if tz is not None and tz <= horizon else None
    return None


def evaluate(m: ModelSpec, method, t) -> RatePair:
    """Dispatch to the rate function of ``method``."""
    method = RateMethod(method)
    if method is RateMethod.MARKOV:
        g, s = markov_rate(m)
        tt = _times(t)
        return _pair(np.full(tt.shape, g), np.full(tt.shape, s), t)
    return {
        RateMethod.EXACT: exact_rate,
        RateMethod.TCL2: tcl2_rate,
        RateMethod.TCL4: tcl4_rate,
        RateMethod.GME: gme_rate,
    }[method](m, t)


def asymptotic_rate(m: ModelSpec, method, horizon: float = DEFAULT_HORIZON) -> RatePair:
    """Stand-in for the ``t -> infinity`` limit: the rate at ``horizon``."""
    return evaluate(m, method, float(horizon))


# -------------------------------------------------------------- rate functions


@dataclass(frozen=True)
class RateFunction:
    """Vectorized ``t -> RatePair`` on ``[0, horizon]``.

    Closed forms are evaluated directly. Fourth-order rates of models without
    a closed form are tabulated once by ``tcl4_on_grid`` on a fine grid and
    interpolated with a cubic spline; the table is immutable after
    construction. ``divergence`` is the first time the rate ceases to exist,
    if that happens inside the horizon.
    """

    model: ModelSpec
    method: RateMethod
    horizon: float
    divergence: float | None
    _spline: object = None

    def __call__(self, t) -> RatePair:
        tt = _times(t)
        if np.any(tt > self.horizon * (1 + 1e-12)):
            raise ValueError(f"t beyond the rate horizon {self.horizon:g}")
        if self.divergence is not None and np.any(tt >= self.divergence):
            raise RateDivergenceError(self.divergence)
        if self._spline is None:
            return evaluate(self.model, self.method, t)
        z = self._spline(tt)
        return _pair(z.real, z.imag, t)


def rate_function(m: ModelSpec, method, horizon: float = DEFAULT_HORIZON, step=None):
    method = RateMethod(method)
    m = canonical(m)
    if method is RateMethod.GME and not isinstance(m, ResonantJC):
        raise ModelError("the Born GME rate is available for the resonant model only")
    if method is RateMethod.EXACT and isinstance(m, Custom):
        raise ModelError("tabulated models have no exact rate")
    spline = None
    if method is RateMethod.TCL4 and isinstance(m, (BandGap, Custom)):
        if step is None:
            step = min(models.time_scale(m) / 200, 1e-3)
            if isinstance(m, Custom):
                step = m.h / 4
        n = int(np.ceil(horizon / step))
        grid = np.linspace(0.0, n * step, n + 1)
        g, s = tcl4_on_grid(m, grid)
        spline = CubicSpline(grid, g + 1j * s)
    return RateFunction(m, method, float(horizon), divergence_time(m, method, horizon), spline)


@dataclass(frozen=True)
class RateTable:
    t: np.ndarray
    gamma: np.ndarray
    shift: np.ndarray
    method: RateMethod
    model: ModelSpec
    truncated_at: float | None = None

    def to_csv(self, path, time_unit: str | None = None):
        with open(path, "w", newline="") as fh:
            fh.write(f"# time unit: {time_unit or self.model.time_unit}\n")
            if self.truncated_at is not None:
                fh.write(f"# rate diverges at t = {self.truncated_at!r}; table truncated\n")
            w = csv.writer(fh)
            w.writerow(["t", "gamma", "shift", "method", "model-id"])
            mid = models.model_id(self.model)
            for row in zip(self.t, self.gamma, self.shift):
                w.writerow([f"{x:.17g}" for x in row] + [self.method.value, mid])


def rate_table(m: ModelSpec, method, times) -> RateTable:
    """Rates on ``times``; exact/GME tables stop before a divergence."""
    method = RateMethod(method)
    times = np.asarray(times, dtype=float)
    t_top = float(times.max()) if times.size else 0.0
    fn = rate_function(m, method, horizon=max(t_top, 1.0))
    keep = times
    if fn.divergence is not None:
        keep = times[times < fn.divergence]
    g, s = fn(keep)
    return RateTable(keep, np.asarray(g), np.asarray(s), method, m, fn.divergence)
