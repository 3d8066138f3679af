"""Ensembles of jump trajectories: estimates of rho(t) with standard errors.

Trajectories are grouped in fixed chunks of consecutive indices. Each chunk
yields the count, mean and sum of squared deviations of every real component
of ``rho``; chunk results are merged pairwise in index order, so the estimate
does not depend on how chunks were distributed over workers.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels, unravel
from .errors import TrajectoryAbort
from .mastereq import DensitySeries, TimeLocalGenerator
from .unravel import TrajectoryConfig

CHUNK = 1000


@dataclass(frozen=True)
class _Moments:
    n: int
    mean: np.ndarray
    m2: np.ndarray
    jumps: int

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return _Moments(n, mean, m2, self.jumps + other.jumps)


def _pairwise(parts):
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[k].merge(parts[k + 1]) for k in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _chunk(tables, rho0, seed, start, stop, out_steps):
    """Run trajectories ``start .. stop-1``; returns moments or the first abort."""
    n = stop - start
    mode = tables.mode
    uniforms = np.empty((n, tables.n_steps + 1))
    for k in range(n):
        uniforms[k] = unravel.trajectory_uniforms(seed, start + k, tables.n_steps)
    sampler = unravel.InitialSampler(rho0, mode, tables.dim)
    x0 = np.array([sampler.draw(uniforms[k, 0]) for k in range(n)])
    states, n_jumps, _, _, status, stop_step = unravel.run_block(
        tables, x0, uniforms[:, 1:], out_steps
    )
    bad = np.flatnonzero(status != _kernels.OK)
    if bad.size:
        k = int(bad[0])
        return ("abort", start + k, int(status[k]), int(stop_step[k]), k)
    if mode == "lindblad":
        psi = states[:, :, 0]
        psi = psi / np.linalg.norm(psi, axis=-1, keepdims=True)
        rho = np.einsum("nta,ntb->ntab", psi, np.conj(psi))
    else:
        rho = np.einsum("nta,ntb->ntab", states[:, :, 0], np.conj(states[:, :, 1]))
    comp = np.stack([rho.real, rho.imag], axis=-1)
    mean = comp.mean(axis=0)
    m2 = ((comp - mean) ** 2).sum(axis=0)
    return ("ok", _Moments(n, mean, m2, int(n_jumps.sum())))


@dataclass(frozen=True)
class EnsembleEstimate:
    """Mean ``rho_hat`` of the trajectory estimator and per-component SEs.

    ``se_re`` and ``se_im`` are sample standard deviations over ``sqrt(n)``
    for the real and imaginary part of each entry.
    """

    grid: np.ndarray
    rho_hat: np.ndarray
    se_re: np.ndarray
    se_im: np.ndarray
    n_traj: int
    mean_jumps: float
    mode: str
    seed: int

    def population(self, level: int = 1) -> np.ndarray:
        return self.rho_hat[:, level, level].real

    def population_se(self, level: int = 1) -> np.ndarray:
        return self.se_re[:, level, level]

    def se_max(self) -> np.ndarray:
        """Largest SE over all real components, per time."""
        return np.maximum(self.se_re, self.se_im).reshape(self.grid.size, -1).max(axis=1)

    def to_csv(self, path, time_unit: str = "model time unit"):
        r, sr, si = self.rho_hat, self.se_re, self.se_im
        with open(path, "w", newline="") as fh:
            fh.write(f"# time unit: {time_unit}\n")
            fh.write(f"# unraveling: {self.mode}; seed: {self.seed}; mean jumps per trajectory: "
                     f"{self.mean_jumps:.17g}\n")
            w = csv.writer(fh)
            w.writerow(["t", "rho11_hat", "rho11_se", "rho01_re_hat", "rho01_im_hat",
                        "rho01_re_se", "rho01_im_se", "n_traj"])
            for k, t in enumerate(self.grid):
                vals = [t, r[k, 1, 1].real, sr[k, 1, 1], r[k, 0, 1].real, r[k, 0, 1].imag,
                        sr[k, 0, 1], si[k, 0, 1]]
                w.writerow([f"{x:.17g}" for x in vals] + [self.n_traj])


def run_ensemble(g: TimeLocalGenerator, rho0, n_traj: int, cfg: TrajectoryConfig,
                 output_times=None, mode: str = "doubled", workers: int = 1,
                 chunk: int = CHUNK) -> EnsembleEstimate:
    """Average ``n_traj`` trajectories ``0 .. n_traj-1`` of stream ``cfg.seed``.

    ``rho0`` is a density matrix (sampled per trajectory through its
    eigendecomposition) or a pure state vector. ``workers > 1`` spreads chunks
    over processes; the result is identical for any worker count.
    """
    if n_traj < 2:
        raise ValueError("n_traj must be at least 2")
    tables = unravel.build_tables(g, cfg.dt, cfg.n_steps, mode, cfg.max_jump_probability)
    steps = unravel.output_steps(cfg.dt, cfg.n_steps, output_times)
    rho0 = np.asarray(rho0, dtype=np.complex128)
    bounds = [(s, min(s + chunk, n_traj)) for s in range(0, n_traj, chunk)]
    args = [(tables, rho0, cfg.seed, a, b, steps) for a, b in bounds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk, *zip(*args)))
    else:
        results = []
        for a in args:
            results.append(_chunk(*a))
            if results[-1][0] == "abort":
                break
    parts = []
    for res in results:
        if res[0] == "abort":
            _, index, code, step, done_in_chunk = res
            completed = sum(p.n for p in parts) + done_in_chunk
            raise TrajectoryAbort(cfg.seed, index, unravel.abort_reason(code, step, cfg.dt),
                                  completed)
        parts.append(res[1])
    tot = _pairwise(parts)
    se = np.sqrt(tot.m2 / (tot.n - 1)) / np.sqrt(tot.n)
    rho_hat = tot.mean[..., 0] + 1j * tot.mean[..., 1]
    for a in (rho_hat, se):
        a.setflags(write=False)
    return EnsembleEstimate(steps * cfg.dt, rho_hat, se[..., 0], se[..., 1], tot.n,
                            tot.jumps / tot.n, mode, cfg.seed)


@dataclass(frozen=True)
class ErrorReport:
    """Deviation ``rho_hat - reference`` per time and entry, and z-scores.

    ``z_re``/``z_im`` divide the real/imaginary deviation by its SE. The SE
    is floored at ``1/n_traj``, the resolution of a mean of ``n_traj``
    trajectories: when no trajectory contributes to an entry (all atoms
    decayed, or a deterministic entry such as t = 0) the empirical SE is
    zero and would turn rounding or an unresolvable ``O(1/n)`` reference
    value into an infinite score.
    """

    grid: np.ndarray
    deviation: np.ndarray
    sup_deviation: np.ndarray
    z_re: np.ndarray
    z_im: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(max(np.max(np.abs(self.z_re)), np.max(np.abs(self.z_im))))

    def coverage(self, k: float = 4.0) -> float:
        """Fraction of real components with ``|z| <= k``."""
        z = np.concatenate([self.z_re.ravel(), self.z_im.ravel()])
        return float(np.mean(np.abs(z) <= k))

    def population_z(self, level: int = 1) -> np.ndarray:
        return self.z_re[:, level, level]


def _z(dev, se, n):
    return dev / np.maximum(se, 1.0 / n)


def estimate_error(e: EnsembleEstimate, reference: DensitySeries) -> ErrorReport:
    """Compare an estimate with a reference series on the same grid.

    The reference may be on a finer grid that contains the estimate's
    grid; its matching points are used.
    """
    idx = np.rint(np.interp(e.grid, reference.grid, np.arange(reference.grid.size))).astype(int)
    if (e.grid.size == 0 or np.any(e.grid > reference.grid[-1] + 1e-9)
            or np.any(np.abs(reference.grid[idx] - e.grid) > 1e-9 * np.maximum(1.0, e.grid))):
        raise ValueError("grid mismatch between estimate and reference")
    ref = reference.rho[idx]
    dev = e.rho_hat - ref
    sup = np.max(np.abs(dev), axis=0)
    return ErrorReport(e.grid, dev, sup, _z(dev.real, e.se_re, e.n_traj), _z(dev.imag, e.se_im, e.n_traj))
