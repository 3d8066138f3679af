"""Compiled inner loop of the jump unraveling.

States are stored as ``x[block, level]``: one block for the single-space
(Lindblad) unraveling, two blocks ``(phi, psi)`` for the doubled space.
Generator tables are sampled at half steps, index ``2 s`` is ``t = s dt``:

    F[T, nb, d, d]     drift operators (A, or A and B)
    J[T, m, nb, d, d]  jump operators per channel (C, or C and D)

Per step the drift ``dx/dt = (F + r/2) x`` with ``r = sum_i |J_i x|^2/|x|^2``
is advanced by RK4. The channel intensities seen at the four RK4 stages are
combined with Simpson weights into ``R_i``, the integrated intensity over the
step, and a jump fires with probability ``1 - exp(-sum R_i)`` at the end of
the step, through channel ``i`` with probability ``R_i / sum R``.
"""

import numpy as np
from numba import njit

OK, NORM_GROWTH, NOT_FINITE = 0, 1, 2


@njit(cache=True, inline="always")
def _intensities(J, j, x, r):
    m = J.shape[1]
    nb = x.shape[0]
    d = x.shape[1]
    n2 = 0.0
    for b in range(nb):
        for a in range(d):
            v = x[b, a]
            n2 += v.real * v.real + v.imag * v.imag
    total = 0.0
    for i in range(m):
        s = 0.0
        for b in range(nb):
            for a in range(d):
                acc = 0j
                for c in range(d):
                    acc += J[j, i, b, a, c] * x[b, c]
                s += acc.real * acc.real + acc.imag * acc.imag
        r[i] = s / n2
        total += r[i]
    return total


@njit(cache=True, inline="always")
def _drift(F, J, j, x, r, out):
    total = _intensities(J, j, x, r)
    nb = x.shape[0]
    d = x.shape[1]
    for b in range(nb):
        for a in range(d):
            acc = 0j
            for c in range(d):
                acc += F[j, b, a, c] * x[b, c]
            out[b, a] = acc + 0.5 * total * x[b, a]


@njit(cache=True, inline="always")
def _norm2(x):
    s = 0.0
    for b in range(x.shape[0]):
        for a in range(x.shape[1]):
            v = x[b, a]
            s += v.real * v.real + v.imag * v.imag
    return s


@njit(cache=True)
def run_trajectories(
    x0, F, J, U, dt, out_steps, norm_cap, states, n_jumps, jump_step, jump_channel, status, stop_step
):
    """Advance ``x0.shape[0]`` trajectories through ``U.shape[1]`` steps.

    ``U[k, s]`` is the uniform used at step ``s`` of trajectory ``k``. States
    at the step indices ``out_steps`` (sorted, may include 0) go to
    ``states[k, :]``. The first ``jump_step.shape[1]`` jumps of each
    trajectory are logged. ``norm_cap`` bounds ``|x|^2 / |x0|^2``.
    """
    n_traj = x0.shape[0]
    n_steps = U.shape[1]
    nb = x0.shape[1]
    d = x0.shape[2]
    m = J.shape[1]
    n_out = out_steps.shape[0]
    log_cap = jump_step.shape[1]
    r = np.empty(m)
    rsum = np.empty(m)
    k1 = np.empty((nb, d), np.complex128)
    k2 = np.empty_like(k1)
    k3 = np.empty_like(k1)
    k4 = np.empty_like(k1)
    y = np.empty_like(k1)
    x = np.empty_like(k1)
    tmp = np.empty_like(k1)
    h6 = dt / 6.0
    for tr in range(n_traj):
        for b in range(nb):
            for a in range(d):
                x[b, a] = x0[tr, b, a]
        n_init = _norm2(x)
        status[tr] = OK
        stop_step[tr] = n_steps
        n_jumps[tr] = 0
        ptr = 0
        while ptr < n_out and out_steps[ptr] == 0:
            for b in range(nb):
                for a in range(d):
                    states[tr, ptr, b, a] = x[b, a]
            ptr += 1
        for s in range(n_steps):
            j = 2 * s
            _drift(F, J, j, x, r, k1)
            for i in range(m):
                rsum[i] = r[i]
            for b in range(nb):
                for a in range(d):
                    y[b, a] = x[b, a] + 0.5 * dt * k1[b, a]
            _drift(F, J, j + 1, y, r, k2)
            for i in range(m):
                rsum[i] += 2.0 * r[i]
            for b in range(nb):
                for a in range(d):
                    y[b, a] = x[b, a] + 0.5 * dt * k2[b, a]
            _drift(F, J, j + 1, y, r, k3)
            for i in range(m):
                rsum[i] += 2.0 * r[i]
            for b in range(nb):
                for a in range(d):
                    y[b, a] = x[b, a] + dt * k3[b, a]
            _drift(F, J, j + 2, y, r, k4)
            total = 0.0
            for i in range(m):
                rsum[i] = h6 * (rsum[i] + r[i])
                total += rsum[i]
            for b in range(nb):
                for a in range(d):
                    x[b, a] += h6 * (k1[b, a] + 2.0 * k2[b, a] + 2.0 * k3[b, a] + k4[b, a])

            p = -np.expm1(-total) if total > 0.0 else 0.0
            u = U[tr, s]
            if u < p:
                target = u / p * total
                ch = m - 1
                acc_r = 0.0
                for i in range(m):
                    acc_r += rsum[i]
                    if target < acc_r:
                        ch = i
                        break
                n0 = 0.0
                n1 = 0.0
                for b in range(nb):
                    for a in range(d):
                        acc = 0j
                        for c in range(d):
                            acc += J[j + 2, ch, b, a, c] * x[b, c]
                        tmp[b, a] = acc
                        v = x[b, a]
                        n0 += v.real * v.real + v.imag * v.imag
                        n1 += acc.real * acc.real + acc.imag * acc.imag
                if n1 > 0.0:
                    f = np.sqrt(n0 / n1)
                    for b in range(nb):
                        for a in range(d):
                            x[b, a] = f * tmp[b, a]
                    if n_jumps[tr] < log_cap:
                        jump_step[tr, n_jumps[tr]] = s + 1
                        jump_channel[tr, n_jumps[tr]] = ch
                    n_jumps[tr] += 1

            nrm = _norm2(x)
            if not np.isfinite(nrm):
                status[tr] = NOT_FINITE
                stop_step[tr] = s + 1
                break
            if nrm > norm_cap * n_init:
                status[tr] = NORM_GROWTH
                stop_step[tr] = s + 1
                break
            while ptr < n_out and out_steps[ptr] == s + 1:
                for b in range(nb):
                    for a in range(d):
                        states[tr, ptr, b, a] = x[b, a]
                ptr += 1
