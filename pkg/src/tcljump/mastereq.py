"""Time-local master equations of the general form

    d rho/dt = A(t) rho + rho B(t)^+ + sum_i C_i(t) rho D_i(t)^+,

with the Lindblad equation and the two-level TCL equation as special cases,
and a fixed-step RK4 propagator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import hilbert, rates
from .errors import NegativeRateError, PropagationError
from .models import ModelSpec

INSTABILITY_LIMIT = 1e6


class GeneratorTable(NamedTuple):
    """Generator sampled at ``times``: ``a``, ``b`` of shape ``(T, d, d)``,
    ``c``, ``d`` of shape ``(T, m, d, d)``."""

    times: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class TimeLocalGenerator:
    """Operators ``A(t)``, ``B(t)`` and channel pairs ``(C_i(t), D_i(t))``.

    ``horizon`` is the first time at which the generator ceases to exist
    (``None`` if it exists throughout). ``vectorized`` optionally maps an
    array of times straight to a ``GeneratorTable``; otherwise tabulation
    calls the per-time functions in a loop.
    """

    dim: int
    a: Callable[[float], np.ndarray]
    b: Callable[[float], np.ndarray]
    channels: tuple = ()
    trace_preserving: bool = False
    horizon: float | None = None
    vectorized: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(tuple(ch) for ch in self.channels))

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def at(self, t: float):
        """``(A, B, [C_i], [D_i])`` at a single time."""
        tab = self.tabulate(np.array([t], dtype=float))
        return tab.a[0], tab.b[0], list(tab.c[0]), list(tab.d[0])

    def tabulate(self, times) -> GeneratorTable:
        times = np.asarray(times, dtype=float)
        if self.vectorized is not None:
            tab = self.vectorized(times)
        else:
            d, m = self.dim, self.n_channels
            a = np.empty((times.size, d, d), dtype=np.complex128)
            b = np.empty_like(a)
            c = np.empty((times.size, m, d, d), dtype=np.complex128)
            dd = np.empty_like(c)
            for k, t in enumerate(times):
                a[k] = self.a(t)
                b[k] = self.b(t)
                for i, (ci, di) in enumerate(self.channels):
                    c[k, i] = ci(t)
                    dd[k, i] = di(t)
            tab = GeneratorTable(times, a, b, c, dd)
        shape = (times.size, self.dim, self.dim)
        if tab.a.shape != shape or tab.b.shape != shape:
            raise ValueError("generator operators do not match the generator dimension")
        if tab.c.shape != (times.size, self.n_channels) + shape[1:]:
            raise ValueError("channel operators do not match the generator dimension")
        return tab

    def trace_defect(self, times) -> float:
        """``max || A + B^+ + sum D_i^+ C_i ||`` over ``times``."""
        tab = self.tabulate(times)
        total = tab.a + np.conj(np.swapaxes(tab.b, -1, -2))
        total = total + np.einsum("tiba,tibc->tac", np.conj(tab.d), tab.c)
        return float(np.max(np.abs(total))) if total.size else 0.0


def apply_generator(a, b, c, d, rho):
    """Right-hand side ``A rho + rho B^+ + sum C_i rho D_i^+``."""
    out = a @ rho + rho @ b.conj().T
    for ci, di in zip(c, d):
        out = out + ci @ rho @ di.conj().T
    return out


# ------------------------------------------------------------- constructors


def tcl_generator(m: ModelSpec, method, horizon: float = rates.DEFAULT_HORIZON):
    """Two-level time-local generator with rate and shift from ``method``.

    ``A = B = -(gamma + i S)/2 sigma+ sigma-``, one channel with
    ``C = sign(gamma) sqrt|gamma| sigma-`` and ``D = sqrt|gamma| sigma-``
    (``sign(0) = +1``). The equation is trace preserving for any sign of
    ``gamma``.
    """
    method = rates.RateMethod(method)
    if method is rates.RateMethod.GME:
        raise ValueError("the Born GME is not time-local; use oracle.population")
    fn = rates.rate_function(m, method, horizon)
    proj = hilbert.excited_projector()
    low = hilbert.sigma_minus()

    def table(times):
        gamma, shift = fn(times)
        gamma = np.asarray(gamma, dtype=float)
        shift = np.asarray(shift, dtype=float)
        decay = -0.5 * (gamma + 1j * shift)
        a = decay[:, None, None] * proj
        root = np.sqrt(np.abs(gamma))
        sign = np.where(gamma < 0, -1.0, 1.0)
        d = (root[:, None, None] * low)[:, None]
        c = sign[:, None, None, None] * d
        return GeneratorTable(times, a, a.copy(), c, d)

    def single(t, part):
        tab = table(np.array([t], dtype=float))
        return getattr(tab, part)[0]

    return TimeLocalGenerator(
        dim=2,
        a=lambda t: single(t, "a"),
        b=lambda t: single(t, "b"),
        channels=[(lambda t: single(t, "c")[0], lambda t: single(t, "d")[0])],
        trace_preserving=True,
        horizon=fn.divergence,
        vectorized=table,
    )


def _as_rate(value):
    if callable(value):
        return value
    value = float(value)
    return lambda t: value


@dataclass(frozen=True)
class LindbladChannel:
    """Jump operator ``op`` with rate ``gamma(t)`` and shift ``shift(t)``.

    Rates and shifts may be constants or callables of time.
    """

    op: np.ndarray
    gamma: object = 1.0
    shift: object = 0.0

    def __post_init__(self):
        object.__setattr__(self, "op", hilbert.as_operator(self.op))
        object.__setattr__(self, "gamma", _as_rate(self.gamma))
        object.__setattr__(self, "shift", _as_rate(self.shift))


def lindblad_generator(h, channels: Sequence[LindbladChannel] = ()) -> TimeLocalGenerator:
    """General-form generator of a Lindblad equation.

    ``A = B = -i H - 1/2 sum (gamma_k + i S_k) L_k^+ L_k`` and
    ``C_k = D_k = sqrt(gamma_k) L_k``. Rates are checked when the generator
    is evaluated; a negative rate raises ``NegativeRateError``.
    """
    h = hilbert.as_operator(h)
    dim = h.shape[0]
    channels = tuple(channels)
    for ch in channels:
        hilbert.as_operator(ch.op, dim)

    def gamma_at(ch, t):
        g = float(ch.gamma(t))
        if g < 0:
            raise NegativeRateError(
                f"negative rate {g:g} at t = {t:g}; a Lindblad generator needs "
                "gamma >= 0, use tcl_generator for sign-changing rates"
            )
        return g

    def a(t):
        out = -1j * h
        for ch in channels:
            lhl = ch.op.conj().T @ ch.op
            out = out - 0.5 * (gamma_at(ch, t) + 1j * float(ch.shift(t))) * lhl
        return out

    def jump(ch):
        return lambda t: np.sqrt(gamma_at(ch, t)) * ch.op

    return TimeLocalGenerator(
        dim=dim,
        a=a,
        b=a,
        channels=[(jump(ch), jump(ch)) for ch in channels],
        trace_preserving=True,
    )


# -------------------------------------------------------------- propagation


@dataclass(frozen=True)
class DensitySeries:
    """Density matrices on a time grid.

    ``truncated`` is set when propagation stopped early because the
    generator ceases to exist at ``stop_time``.
    """

    grid: np.ndarray
    rho: np.ndarray
    truncated: bool = False
    stop_time: float | None = None

    def population(self, level: int = 1) -> np.ndarray:
        return self.rho[:, level, level].real

    def to_csv(self, path, time_unit: str = "model time unit"):
        d = self.rho.shape[-1]
        with open(path, "w", newline="") as fh:
            fh.write(f"# time unit: {time_unit}\n")
            if self.truncated:
                fh.write(f"# generator ceases to exist at t = {self.stop_time!r}; series truncated\n")
            w = csv.writer(fh)
            if d == 2:
                w.writerow(["t", "rho00_re", "rho01_re", "rho01_im", "rho11_re"])
                r = self.rho
                cols = [self.grid, r[:, 0, 0].real, r[:, 0, 1].real, r[:, 0, 1].imag, r[:, 1, 1].real]
            else:
                names = ["t"]
                cols = [self.grid]
                for i in range(d):
                    for j in range(d):
                        names += [f"rho{i}{j}_re", f"rho{i}{j}_im"]
                        cols += [self.rho[:, i, j].real, self.rho[:, i, j].imag]
                w.writerow(names)
            for row in zip(*cols):
                w.writerow([f"{x:.17g}" for x in row])


def check_grid(grid) -> float:
    """Validate a uniform increasing grid and return its step."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a non-empty 1-d array")
    if grid.size == 1:
        return 0.0
    steps = np.diff(grid)
    h = float(steps.mean())
    if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * max(h, 1.0):
        raise ValueError("grid must be uniform and increasing")
    return h


def usable_grid(g: TimeLocalGenerator, grid):
    """Cut ``grid`` so a fixed-step integrator never touches the horizon.

    Keeps the points at least one step before ``g.horizon``. Returns the
    grid and a truncation flag.
    """
    grid = np.asarray(grid, dtype=float)
    h = check_grid(grid)
    if g.horizon is None or grid[-1] < g.horizon - h:
        return grid, False
    keep = grid <= g.horizon - max(h, 0.0)
    if h == 0.0:
        keep = grid < g.horizon
    return grid[keep], True


def propagate(g: TimeLocalGenerator, rho0, grid) -> DensitySeries:
    """Classical RK4 on the matrix equation, generator sampled at the substage
    times ``t``, ``t + dt/2`` and ``t + dt``.

    If the generator has a finite horizon inside the grid the series stops at
    the last grid point a full step before it and is flagged as truncated.
    """
    rho0 = hilbert.check_density_matrix(np.asarray(rho0), atol=1e-9)
    if rho0.shape[0] != g.dim:
        raise ValueError(f"rho0 has dimension {rho0.shape[0]}, generator {g.dim}")
    grid, truncated = usable_grid(g, grid)
    n = grid.size
    out = np.empty((n, g.dim, g.dim), dtype=np.complex128)
    if n == 0:
        return DensitySeries(grid, out, True, g.horizon)
    out[0] = rho0
    if n > 1:
        half = np.empty(2 * n - 1)
        half[0::2] = grid
        half[1::2] = 0.5 * (grid[:-1] + grid[1:])
        tab = g.tabulate(half)
        rho = np.array(rho0)
        for k in range(n - 1):
            dt = grid[k + 1] - grid[k]
            ops = [(tab.a[j], tab.b[j], tab.c[j], tab.d[j]) for j in (2 * k, 2 * k + 1, 2 * k + 2)]
            k1 = apply_generator(*ops[0], rho)
            k2 = apply_generator(*ops[1], rho + 0.5 * dt * k1)
            k3 = apply_generator(*ops[1], rho + 0.5 * dt * k2)
            k4 = apply_generator(*ops[2], rho + dt * k3)
            rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(rho)) or np.max(np.abs(rho)) > INSTABILITY_LIMIT:
                raise PropagationError(
                    f"propagation unstable at t = {grid[k + 1]:.10g} (step {k + 1}); "
                    "reduce dt or check the generator"
                )
            out[k + 1] = rho
    out.setflags(write=False)
    return DensitySeries(grid, out, truncated, g.horizon if truncated else None)

