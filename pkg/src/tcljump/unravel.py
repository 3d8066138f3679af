"""Piecewise-deterministic jump trajectories.

Two unravelings share one integrator:

* ``"lindblad"``: a normalized state ``psi`` in the system space, for
  generators in Lindblad form (``A = B``, ``C_i = D_i``, rates >= 0);
* ``"doubled"``: a pair ``theta = (phi, psi)`` for any time-local generator,
  with ``F = diag(A, B)`` and ``J_i = diag(C_i, D_i)``.

Between jumps the state follows

    d theta/dt = (F + 1/2 sum_i |J_i theta|^2 / |theta|^2) theta,

and channel ``i`` fires at intensity ``|J_i theta|^2 / |theta|^2`` with
``theta -> (|theta| / |J_i theta|) J_i theta``. The average of
``|phi><psi|`` over realizations solves the master equation.

Each trajectory draws its uniforms from a stream keyed by ``(seed, index)``:
one for sampling the initial state, then one per time step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels, hilbert
from .errors import NegativeRateError, PropagationError, TrajectoryAbort
from .hilbert import DoubledState
from .mastereq import TimeLocalGenerator

MODES = ("lindblad", "doubled")
NORM_GROWTH_LIMIT = 1e6
MAX_STEPS = 100_000_000


@dataclass(frozen=True)
class TrajectoryConfig:
    """Step size, end time and the ``(seed, trajectory_index)`` stream key.

    ``t_end`` must be an integer multiple of ``dt``. ``max_jump_probability``
    bounds ``sum_i max |J_i|^2 dt`` over the run (checked before stepping).
    """

    dt: float = 5e-3
    t_end: float = 10.0
    seed: int = 0
    trajectory_index: int = 0
    max_jump_probability: float = 0.05

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not (np.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError(f"t_end must be >= 0, got {self.t_end!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.trajectory_index < 0:
            raise ValueError("trajectory_index must be >= 0")
        n = round(self.t_end / self.dt)
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError("t_end must be an integer multiple of dt")
        if n > MAX_STEPS:
            raise ValueError(f"{n} steps exceed the limit of {MAX_STEPS}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def step_times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def trajectory_uniforms(seed: int, index: int, n_steps: int) -> np.ndarray:
    """The ``n_steps + 1`` uniforms of one trajectory, initial draw first."""
    return trajectory_rng(seed, index).random(n_steps + 1)


# ------------------------------------------------------------------- tables


@dataclass(frozen=True)
class UnravelingTables:
    """Generator sampled at half steps, in the layout of the compiled kernel."""

    mode: str
    dt: float
    f: np.ndarray
    j: np.ndarray

    @property
    def n_steps(self) -> int:
        return (self.f.shape[0] - 1) // 2

    @property
    def dim(self) -> int:
        return self.f.shape[-1]


def build_tables(g: TimeLocalGenerator, dt: float, n_steps: int, mode: str = "doubled",
                 max_jump_probability: float = 0.05) -> UnravelingTables:
    """Tabulate ``g`` on ``[0, n_steps dt]`` and run the jump-probability scan."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    t_end = n_steps * dt
    if g.horizon is not None and t_end > g.horizon - dt:
        raise PropagationError(
            f"the generator ceases to exist at t = {g.horizon:.10g}; cannot unravel to {t_end:g}"
        )
    times = 0.5 * dt * np.arange(2 * n_steps + 1)
    tab = g.tabulate(times)
    if mode == "doubled":
        f = np.stack([tab.a, tab.b], axis=1)
        j = np.stack([tab.c, tab.d], axis=2)
    else:
        if not (np.allclose(tab.a, tab.b, rtol=0, atol=1e-14)
                and np.allclose(tab.c, tab.d, rtol=0, atol=1e-14)):
            raise NegativeRateError(
                "generator is not of Lindblad form (A != B or C != D, e.g. a negative "
                "rate); use the doubled unraveling"
            )
        f = tab.a[:, None]
        j = tab.c[:, :, None]
    f = np.ascontiguousarray(f, dtype=np.complex128)
    j = np.ascontiguousarray(j, dtype=np.complex128)
    if j.shape[1]:
        op_norm2 = np.linalg.svd(j, compute_uv=False)[..., 0] ** 2
        worst = float(np.max(np.sum(np.max(op_norm2, axis=2), axis=1))) * dt
        if worst > max_jump_probability:
            raise ValueError(
                f"jump probability per step up to {worst:.3g} exceeds "
                f"{max_jump_probability:g}; reduce dt"
            )
    f.setflags(write=False)
    j.setflags(write=False)
    return UnravelingTables(mode, float(dt), f, j)


# ---------------------------------------------------------- initial states


class InitialSampler:
    """Kernel state ``(blocks, dim)`` for an initial vector, pair or density.

    A density matrix is decomposed once; each draw picks an eigenvector with
    probability equal to its eigenvalue using the uniform ``u0`` (eigenvalues
    below ``1e-12`` of the largest count as zero). Vectors and pairs are
    returned as given.
    """

    def __init__(self, initial, mode: str, dim: int):
        nb = 1 if mode == "lindblad" else 2
        self.fixed = None
        if isinstance(initial, DoubledState):
            if initial.dim != dim:
                raise ValueError(f"state dimension {initial.dim} != generator dimension {dim}")
            if nb == 1:
                if not np.array_equal(initial.phi, initial.psi):
                    raise ValueError("the Lindblad unraveling needs phi == psi")
                self.fixed = np.array([initial.phi])
            else:
                self.fixed = initial.as_array()
            return
        arr = np.asarray(initial, dtype=np.complex128)
        if arr.ndim == 1:
            self.fixed = np.array([hilbert.as_vector(arr, dim)] * nb)
        elif arr.ndim == 2:
            rho = hilbert.check_density_matrix(arr, atol=1e-9)
            if rho.shape[0] != dim:
                raise ValueError(f"state dimension {rho.shape[0]} != generator dimension {dim}")
            evals, self.evecs = np.linalg.eigh(rho)
            self.weights = np.where(evals > 1e-12 * evals.max(), evals, 0.0)
            self.cum = np.cumsum(self.weights) / self.weights.sum()
            self.nb = nb
        else:
            raise ValueError("initial state must be a vector, a DoubledState or a density matrix")

    def draw(self, u0: float) -> np.ndarray:
        if self.fixed is not None:
            return self.fixed.copy()
        k = min(int(np.searchsorted(self.cum, u0, side="right")), self.cum.size - 1)
        while self.weights[k] == 0.0:
            k -= 1
        return np.array([self.evecs[:, k]] * self.nb)


# --------------------------------------------------------------- records


@dataclass(frozen=True)
class TrajectoryRecord:
    """States of one trajectory at the output times, plus its jump log.

    ``states`` has shape ``(len(times), blocks, dim)``; ``jumps`` holds
    ``(time, channel)`` pairs.
    """

    times: np.ndarray
    states: np.ndarray
    jumps: tuple
    mode: str
    seed: int
    index: int

    def state(self, k: int):
        if self.mode == "lindblad":
            return self.states[k, 0]
        return DoubledState(self.states[k, 0], self.states[k, 1])

    def density(self) -> np.ndarray:
        """``|phi><psi|`` (or ``|psi><psi|``) at each output time."""
        s = self.states
        return np.einsum("ta,tb->tab", s[:, 0], np.conj(s[:, -1]))

    def to_jump_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trajectory_index", "t_jump", "channel"])
            for t, ch in self.jumps:
                w.writerow([self.index, f"{t:.17g}", ch])


def output_steps(cfg_dt: float, n_steps: int, times) -> np.ndarray:
    """Map output times onto step indices; they must lie on the step grid."""
    if times is None:
        return np.arange(n_steps + 1)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    idx = np.rint(times / cfg_dt).astype(np.int64)
    if np.any(np.abs(idx * cfg_dt - times) > 1e-9 * np.maximum(1.0, np.abs(times))):
        raise ValueError("output times must lie on the step grid")
    if np.any(idx < 0) or np.any(idx > n_steps) or np.any(np.diff(idx) <= 0):
        raise ValueError("output times must be increasing and inside [0, t_end]")
    return idx


def run_block(tables: UnravelingTables, x0, uniforms, out_steps, log_jumps: int = 0):
    """Run trajectories with given initial states and step uniforms."""
    n = x0.shape[0]
    nb, d = tables.f.shape[1], tables.dim
    states = np.zeros((n, out_steps.size, nb, d), dtype=np.complex128)
    n_jumps = np.zeros(n, dtype=np.int64)
    jump_step = np.zeros((n, log_jumps), dtype=np.int64)
    jump_channel = np.zeros((n, log_jumps), dtype=np.int64)
    status = np.zeros(n, dtype=np.int64)
    stop = np.zeros(n, dtype=np.int64)
    _kernels.run_trajectories(
        np.ascontiguousarray(x0, dtype=np.complex128),
        tables.f,
        tables.j,
        np.ascontiguousarray(uniforms, dtype=float),
        tables.dt,
        np.ascontiguousarray(out_steps, dtype=np.int64),
        NORM_GROWTH_LIMIT**2,
        states,
        n_jumps,
        jump_step,
        jump_channel,
        status,
        stop,
    )
    return states, n_jumps, jump_step, jump_channel, status, stop


def abort_reason(code: int, step: int, dt: float) -> str:
    if code == _kernels.NORM_GROWTH:
        what = f"state norm grew beyond {NORM_GROWTH_LIMIT:g} times its initial value"
    else:
        what = "state became non-finite"
    return f"{what} at t = {step * dt:.10g}"


def simulate_trajectory(initial, g: TimeLocalGenerator, cfg: TrajectoryConfig,
                        output_times=None, mode: str = "doubled", log_jumps: int = 1024):
    """One trajectory, a deterministic function of ``(initial, g, seed, index)``.

    ``output_times`` default to every step and must lie on the step grid.
    """
    n = cfg.n_steps
    tables = build_tables(g, cfg.dt, n, mode, cfg.max_jump_probability)
    steps = output_steps(cfg.dt, n, output_times)
    u = trajectory_uniforms(cfg.seed, cfg.trajectory_index, n)
    x0 = InitialSampler(initial, mode, g.dim).draw(u[0])
    states, n_jumps, jstep, jch, status, stop = run_block(
        tables, x0[None], u[None, 1:], steps, log_jumps
    )
    if status[0] != _kernels.OK:
        raise TrajectoryAbort(cfg.seed, cfg.trajectory_index,
                              abort_reason(status[0], stop[0], cfg.dt))
    logged = min(int(n_jumps[0]), log_jumps)
    jumps = tuple((float(jstep[0, k] * cfg.dt), int(jch[0, k])) for k in range(logged))
    states = states[0]
    states.setflags(write=False)
    return TrajectoryRecord(steps * cfg.dt, states, jumps, mode, cfg.seed, cfg.trajectory_index)


# ------------------------------------------------------------ single steps


def _single_step(x0, g: TimeLocalGenerator, t: float, dt: float, rng, mode: str):
    tab = g.tabulate(np.array([t, t + 0.5 * dt, t + dt]))
    if mode == "doubled":
        f = np.stack([tab.a, tab.b], axis=1)
        j = np.stack([tab.c, tab.d], axis=2)
    else:
        if np.any(tab.a != tab.b) or np.any(tab.c != tab.d):
            raise NegativeRateError("generator is not of Lindblad form")
        f, j = tab.a[:, None], tab.c[:, :, None]
    tables = UnravelingTables(mode, float(dt), np.ascontiguousarray(f), np.ascontiguousarray(j))
    u = np.array([[rng.random()]])
    states, n_jumps, _, jch, status, stop = run_block(tables, x0[None], u, np.array([1]), 1)
    if status[0] != _kernels.OK:
        raise PropagationError(abort_reason(status[0], 1, dt))
    return states[0, 0], (int(jch[0, 0]) if n_jumps[0] else None)


def lindblad_step(psi, g: TimeLocalGenerator, t: float, dt: float, rng):
    """One step of the single-space unraveling.

    ``g`` must be in Lindblad form (see ``mastereq.lindblad_generator``).
    Returns the new normalized-dynamics state and the fired channel or ``None``.
    """
    psi = hilbert.as_vector(psi, g.dim)
    out, ch = _single_step(np.array([psi]), g, t, dt, rng, "lindblad")
    return out[0], ch


def doubled_step(theta: DoubledState, g: TimeLocalGenerator, t: float, dt: float, rng):
    """One step of the doubled-space unraveling; returns ``(theta, channel or None)``."""
    if theta.norm2() <= 0:
        raise ValueError("theta must have a positive norm")
    out, ch = _single_step(theta.as_array(), g, t, dt, rng, "doubled")
    return DoubledState(out[0], out[1]), ch
