"""Exact and reference solutions for a two-level atom decaying into the vacuum.

The excited-state amplitude obeys the closed memory equation

    dc1/dt = -integral_0^t k(t - s) c1(s) ds,    k = (Phi + i Psi) / 2.

For the resonant Jaynes-Cummings model ``c1`` has a closed form. For any kernel
that is a finite sum of exponentials ``k(t) = sum_k w_k exp(-mu_k t)`` the
equation is equivalent to the linear system

    dc1/dt = -sum_k w_k z_k,    dz_k/dt = -mu_k z_k + c1,    z_k(0) = 0,

one auxiliary amplitude (pseudomode) per exponential.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import expm
from scipy.optimize import brentq

from . import models, rates
from .errors import ModelError
from .models import BandGap, Custom, DetunedJC, ModelSpec, ResonantJC

AMPLITUDE_EPS = 1e-12


def sinhc(z):
    """``sinh(z) / z`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=np.complex128)
    safe = np.where(z == 0, 1.0, z)
    return np.where(z == 0, 1.0, np.sinh(safe) / safe)


def _damped_pole(d, lam, t):
    """``exp(-lam t/2) [cosh(d t/2) + (lam/d) sinh(d t/2)]``, real for real or imaginary ``d``.

    The exponentials are combined before evaluation so that large ``t`` with
    real ``d`` close to ``lam`` does not overflow.
    """
    t = np.asarray(t, dtype=float)
    x = 0.5 * d * t
    a = 0.5 * lam * t
    small = np.abs(x) < 1.0
    xs = np.where(small, 1.0, x)
    ep, em = np.exp(xs - a), np.exp(-xs - a)
    big = 0.5 * (ep + em) + a * (ep - em) / (2 * xs)
    xn = np.where(small, x, 0.0)
    near = np.exp(-a) * (np.cosh(xn) + a * sinhc(xn))
    return np.where(small, near, big).real


def _resonant_d(m: ResonantJC, factor: float = 2.0) -> complex:
    # factor 2 gives d of the exact solution, 4 gives d' of the Born GME
    return np.sqrt(complex(m.lam**2 - factor * m.gamma0 * m.lam))


def resonant_amplitude(m: ResonantJC, t):
    """Closed-form ``c1(t) / c1(0)`` on resonance."""
    t = np.asarray(t, dtype=float)
    return _damped_pole(_resonant_d(m), m.lam, t)


def gme_population_factor(m: ResonantJC, t):
    """``rho11(t) / rho11(0)`` of the second-order Born (GME) equation."""
    t = np.asarray(t, dtype=float)
    return _damped_pole(_resonant_d(m, 4.0), m.lam, t)


# ---------------------------------------------------------------- pseudomodes


@dataclass(frozen=True)
class PseudomodeSystem:
    """Exponential decomposition ``k(t) = sum_k weights[k] exp(-rates[k] t)``."""

    weights: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.complex128)
        mu = np.array(self.rates, dtype=np.complex128)
        if w.shape != mu.shape or w.ndim != 1 or w.size == 0:
            raise ModelError("weights and rates must be equal-length 1-d arrays")
        if np.any(mu.real <= 0):
            raise ModelError("pseudomode decay constants need a positive real part")
        w.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", mu)

    def kernel(self, t):
        t = np.asarray(t, dtype=float)
        return np.sum(self.weights * np.exp(-np.multiply.outer(t, self.rates)), axis=-1)

    def matrix(self) -> np.ndarray:
        """Generator ``M`` of ``y = (c1, z_1, ..., z_K)``, ``dy/dt = M y``."""
        k = self.weights.size
        m = np.zeros((k + 1, k + 1), dtype=np.complex128)
        m[0, 1:] = -self.weights
        m[1:, 0] = 1.0
        m[1:, 1:] = np.diag(-self.rates)
        return m


def pseudomodes(m: ModelSpec) -> PseudomodeSystem:
    if isinstance(m, ResonantJC):
        return PseudomodeSystem([0.5 * m.gamma0 * m.lam], [m.lam])
    if isinstance(m, DetunedJC):
        return PseudomodeSystem([0.5 * m.gamma0 * m.lam], [m.lam - 1j * m.delta])
    if isinstance(m, BandGap):
        return PseudomodeSystem(
            [m.omega0**2 * m.w1, -(m.omega0**2) * m.w2],
            [0.5 * m.gamma1, 0.5 * m.gamma2],
        )
    raise ModelError(f"{m.variant} has no pole decomposition; exact solution unsupported")


@lru_cache(maxsize=64)
def _eigensystem(m: ModelSpec):
    mat = pseudomodes(m).matrix()
    evals, vecs = np.linalg.eig(mat)
    if np.linalg.cond(vecs) > 1e8:
        return mat, None, None
    y0 = np.zeros(mat.shape[0], dtype=np.complex128)
    y0[0] = 1.0
    return mat, evals, vecs * np.linalg.solve(vecs, y0)


def pseudomode_state(m: ModelSpec, t):
    """``(c1, z_1, ..., z_K)`` at times ``t`` for ``c1(0) = 1``, shape ``(..., K+1)``.

    Evaluated by diagonalizing the constant generator, so it is exact up to
    rounding at any ``t`` (falls back to ``expm`` near a defective point).
    """
    t = np.asarray(t, dtype=float)
    mat, evals, scaled = _eigensystem(m)
    if evals is None:
        flat = np.array([expm(mat * s)[:, 0] for s in t.ravel()])
        return flat.reshape(t.shape + (mat.shape[0],))
    y = np.exp(np.multiply.outer(t, evals)) @ scaled.T
    # the initial state exactly, so that dc1/dt(0) = 0 without rounding
    return np.where((t == 0)[..., None], np.eye(mat.shape[0])[0], y)


def amplitude_and_derivative(m: ModelSpec, t):
    """``c1(t)`` and ``dc1/dt`` for ``c1(0) = 1``; closed form on resonance."""
    if isinstance(m, ResonantJC):
        c1 = resonant_amplitude(m, t)
        return c1, -0.5 * _resonant_rate(m, t) * c1
    y = pseudomode_state(m, t)
    mat = pseudomodes(m).matrix()
    return y[..., 0], y @ mat[0]


def _resonant_rate(m: ResonantJC, t):
    t = np.asarray(t, dtype=float)
    d = _resonant_d(m)
    x = 0.5 * d * t
    small = np.abs(x) < 1.0
    xn = np.where(small, x, 0.0)
    near = m.gamma0 * m.lam * t * sinhc(xn) / (np.cosh(xn) + 0.5 * m.lam * t * sinhc(xn))
    # divided through by cosh(x) so large real x does not overflow
    th = np.tanh(np.where(small, 1.0, x))
    ds = d if d != 0 else 1.0
    far = m.gamma0 * m.lam * (2 / ds) * th / (1 + (m.lam / ds) * th)
    return np.where(small, near, far).real


# ----------------------------------------------------------------- series


@dataclass(frozen=True)
class AmplitudeSeries:
    grid: np.ndarray
    c1: np.ndarray
    model: ModelSpec


def _uniform_step(grid) -> float:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or grid[0] != 0.0:
        raise ValueError("grid must be a 1-d array starting at t = 0")
    if grid.size == 1:
        return 0.0
    steps = np.diff(grid)
    h = float(steps.mean())
    if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * max(h, 1.0):
        raise ValueError("grid must be uniform and increasing")
    return h


def amplitude_pseudomode(m: ModelSpec, c1_0: complex, grid, max_step: float = 1e-3):
    """Integrate the pseudomode system with classical RK4.

    The internal step is the grid step, subdivided so it never exceeds
    ``max_step``.
    """
    h = _uniform_step(grid)
    grid = np.asarray(grid, dtype=float)
    mat = pseudomodes(m).matrix()
    out = np.empty(grid.size, dtype=np.complex128)
    y = np.zeros(mat.shape[0], dtype=np.complex128)
    y[0] = c1_0
    out[0] = c1_0
    if grid.size > 1:
        sub = max(1, int(np.ceil(h / max_step - 1e-9)))
        a = mat * (h / sub)
        # RK4 applied to a linear autonomous system is this matrix polynomial
        a2 = a @ a
        step = np.eye(mat.shape[0]) + a + a2 / 2 + a2 @ a / 6 + a2 @ a2 / 24
        step = np.linalg.matrix_power(step, sub)
        for k in range(1, grid.size):
            y = step @ y
            out[k] = y[0]
    out.setflags(write=False)
    return AmplitudeSeries(grid.copy(), out, m)


def amplitude_exact(m: ModelSpec, c1_0: complex, grid, max_step: float = 1e-3):
    """Exact survival amplitude on a uniform grid starting at 0.

    Closed form for the resonant model, pseudomode RK4 for the others.
    """
    _uniform_step(grid)
    if isinstance(m, Custom):
        raise ModelError("tabulated models have no exact amplitude")
    if isinstance(m, ResonantJC):
        grid = np.array(grid, dtype=float)
        c1 = c1_0 * resonant_amplitude(m, grid).astype(np.complex128)
        c1.setflags(write=False)
        return AmplitudeSeries(grid, c1, m)
    return amplitude_pseudomode(m, c1_0, grid, max_step)


def memory_residual(series: AmplitudeSeries) -> float:
    """Relative residual of the amplitude series in its memory equation.

    ``dc1/dt`` by second-order finite differences, the memory integral by
    the trapezoid rule; returns ``max|residual| / max|dc1/dt|``.
    """
    t, c = series.grid, series.c1
    h = _uniform_step(t)
    k = models.kernel(series.model, t)
    dc = np.gradient(c, h, edge_order=2)
    mem = np.empty_like(c)
    for n in range(t.size):
        if n == 0:
            mem[0] = 0.0
            continue
        vals = k[n::-1] * c[: n + 1]
        mem[n] = h * (vals.sum() - 0.5 * (vals[0] + vals[-1]))
    res = dc + mem
    return float(np.max(np.abs(res)) / np.max(np.abs(dc)))


# ------------------------------------------------------------- zero times


def zero_crossing_time(m: ModelSpec) -> float | None:
    """First zero of the exact resonant population, or ``None`` if it never vanishes."""
    m = rates.canonical(m)
    if not isinstance(m, ResonantJC):
        raise ModelError("zero_crossing_time is defined for the resonant model")
    if m.gamma0 <= 0.5 * m.lam:
        return None
    dhat = np.sqrt(2 * m.gamma0 * m.lam - m.lam**2)
    return float(2 / dhat * (np.pi - np.arctan(dhat / m.lam)))


def gme_zero_time(m: ModelSpec) -> float | None:
    """First zero of the Born GME population (exists for ``gamma0 > lam/4``)."""
    m = rates.canonical(m)
    if not isinstance(m, ResonantJC):
        raise ModelError("the Born GME solution is available for the resonant model only")
    if m.gamma0 <= 0.25 * m.lam:
        return None
    dhat = np.sqrt(4 * m.gamma0 * m.lam - m.lam**2)
    return float(2 / dhat * (np.pi - np.arctan(dhat / m.lam)))


@lru_cache(maxsize=64)
def _first_zero_scan(m: ModelSpec, t_max: float) -> float | None:
    n = int(np.ceil(20 * t_max / models.time_scale(m))) + 1
    ts = np.linspace(0.0, t_max, max(n, 2))
    c = pseudomode_state(m, ts)[:, 0]
    tiny = np.flatnonzero(np.abs(c) <= AMPLITUDE_EPS)
    first = ts[tiny[0]] if tiny.size else None
    if np.max(np.abs(c.imag)) <= 1e-12 * np.max(np.abs(c)):
        flips = np.flatnonzero(np.sign(c.real[1:]) * np.sign(c.real[:-1]) < 0)
        if flips.size:
            i = flips[0]
            root = brentq(lambda s: pseudomode_state(m, s)[0].real, ts[i], ts[i + 1])
            first = root if first is None else min(first, root)
    return first


def first_amplitude_zero(m: ModelSpec, t_max: float) -> float | None:
    """Earliest ``t <= t_max`` where ``c1`` vanishes (the exact rate diverges)."""
    m = rates.canonical(m)
    if isinstance(m, ResonantJC):
        t0 = zero_crossing_time(m)
        return t0 if t0 is not None and t0 <= t_max else None
    # scan horizons in powers of two so cached results are reused
    horizon = 2.0 ** np.ceil(np.log2(max(t_max, 1.0)))
    t0 = _first_zero_scan(m, float(horizon))
    return t0 if t0 is not None and t0 <= t_max else None


# ------------------------------------------------------------ populations


def population(m: ModelSpec, method, rho11_0: float, grid) -> np.ndarray:
    """Excited-state population on ``grid`` under the chosen scheme.

    TCL populations are ``rho11(0) exp(-integral gamma)`` with the integral
    taken by the cumulative trapezoid rule on the grid.
    """
    method = rates.RateMethod(method)
    if not 0.0 <= rho11_0 <= 1.0:
        raise ValueError(f"rho11(0) = {rho11_0} outside [0, 1]")
    grid = np.asarray(grid, dtype=float)
    _uniform_step(grid)
    if method is rates.RateMethod.EXACT:
        c1 = amplitude_exact(m, 1.0, grid).c1
        return rho11_0 * np.abs(c1) ** 2
    if method is rates.RateMethod.MARKOV:
        return rho11_0 * np.exp(-rates.markov_rate(m).gamma * grid)
    if method is rates.RateMethod.GME:
        cm = rates.canonical(m)
        if not isinstance(cm, ResonantJC):
            raise ModelError("the Born GME solution is available for the resonant model only")
        return rho11_0 * gme_population_factor(cm, grid)
    if method is rates.RateMethod.TCL2:
        gamma = rates.tcl2_rate(m, grid).gamma
    else:
        gamma = rates.tcl4_on_grid(m, grid).gamma
    return rho11_0 * np.exp(-cumulative_trapezoid(gamma, grid, initial=0.0))


def coherence(m: ModelSpec, c0: complex, series: AmplitudeSeries) -> np.ndarray:
    """``rho10(t) = c1(t) conj(c0)`` for the pure initial state ``c0|0> + c1(0)|1>``."""
    if abs(c0) ** 2 + abs(series.c1[0]) ** 2 > 1 + 1e-12:
        raise ValueError("|c0|^2 + |c1(0)|^2 exceeds 1")
    return series.c1 * np.conj(c0)


def exact_density(m: ModelSpec, rho11_0: float, rho10_0: complex, grid) -> np.ndarray:
    """Exact two-level ``rho(t)``, shape ``(len(grid), 2, 2)``.

    Depends on the initial state only through ``rho11(0)`` and ``rho10(0)``:
    the population scales with ``|c1(t)/c1(0)|^2`` and the coherence with
    ``c1(t)/c1(0)``.
    """
    u = amplitude_exact(m, 1.0, grid).c1
    rho = np.empty((u.size, 2, 2), dtype=np.complex128)
    rho[:, 1, 1] = rho11_0 * np.abs(u) ** 2
    rho[:, 0, 0] = 1.0 - rho[:, 1, 1]
    rho[:, 1, 0] = rho10_0 * u
    rho[:, 0, 1] = np.conj(rho[:, 1, 0])
    return rho


def write_series(path, grid, values, time_unit: str = "model time unit", name: str = "value"):
    """Write ``t, value`` (real values) or ``t, re, im`` (complex values) as CSV."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError("values must match the grid")
    with open(path, "w") as fh:
        fh.write(f"# time unit: {time_unit}\n")
        if np.iscomplexobj(values):
            fh.write("t,re,im\n")
            for t, v in zip(grid, values):
                fh.write(f"{t:.17g},{v.real:.17g},{v.imag:.17g}\n")
        else:
            fh.write(f"t,{name}\n")
            for t, v in zip(grid, values):
                fh.write(f"{t:.17g},{v:.17g}\n")
