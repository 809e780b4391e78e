"""Hot numeric kernels, each with a numba build and a pure-numpy fallback.

The active backend is chosen once at import time: numba when importable,
unless the environment variable ``QNLEARN_NO_NUMBA`` is set to a truthy
value (``1``/``true``/``yes``/``on``), in which case the numpy fallbacks
are bound instead.  ``BACKEND`` records the choice.

Cross-backend behaviour:
  * the stochastic kernels (``ssa_sample_grid``, ``ssa_path``) are
    bit-identical on both backends -- they consume the same uniform
    stream from the numpy ``Generator`` they are handed, exponential
    holding times go through scalar ``math.log1p`` (the numpy ufunc
    rounds differently on this platform), and rate accumulation order
    is fixed;
  * the Euler kernels (``euler_forward``, ``euler_backward``) may differ
    by a few ulp between backends because BLAS matvecs and explicit
    loops round differently.  Each backend is individually deterministic.

``euler_forward`` accepts any row-stochastic routing matrix, including
one with nonzero diagonal: the update uses inflow minus total outflow,
which subsumes the self-loop correction term.
"""

from __future__ import annotations

import math
import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("QNLEARN_NO_NUMBA", "").strip().lower() in {
        "1",
        "true",
        "yes",
        "on",
    }


# ---------------------------------------------------------------------------
# loop implementations (numba-compilable)
# ---------------------------------------------------------------------------


def _euler_forward_loops(P, mu, s, x0, dt, H):
    M = x0.shape[0]
    traj = np.empty((H, M))
    x = np.empty(M)
    w = np.empty(M)
    for k in range(M):
        x[k] = x0[k]
        traj[0, k] = x0[k]
    for h in range(1, H):
        for i in range(M):
            xi = x[i]
            u = xi if xi < s[i] else s[i]
            w[i] = mu[i] * u
        for k in range(M):
            inflow = 0.0
            for i in range(M):
                inflow += w[i] * P[i, k]
            xk = x[k] + dt * (inflow - w[k])
            x[k] = xk
            traj[h, k] = xk
    return traj


def _euler_backward_loops(P, mu, s, samples, traj, dt):
    H = samples.shape[0]
    M = samples.shape[1]
    N = 0.0
    for k in range(M):
        N += samples[0, k]
    scale = 100.0 / (2.0 * N)

    # argmax of the L1 gap, lowest step on ties
    best = -1.0
    hstar = 1
    for h in range(1, H):
        l1 = 0.0
        for k in range(M):
            d = samples[h, k] - traj[h, k]
            l1 += d if d >= 0.0 else -d
        if l1 > best:
            best = l1
            hstar = h
    err = best * scale

    g = np.zeros(M)
    for k in range(M):
        d = samples[hstar, k] - traj[hstar, k]
        if d > 0.0:
            g[k] = -scale
        elif d < 0.0:
            g[k] = scale

    gP = np.zeros((M, M))
    gmu = np.zeros(M)
    u = np.empty(M)
    du = np.empty(M)
    Pg = np.empty(M)
    for h in range(hstar, 0, -1):
        for j in range(M):
            xj = traj[h - 1, j]
            u[j] = xj if xj < s[j] else s[j]
            du[j] = 1.0 if xj <= s[j] else 0.0
        for j in range(M):
            acc = 0.0
            for k in range(M):
                acc += P[j, k] * g[k]
            Pg[j] = acc
        for i in range(M):
            wi = mu[i] * u[i]
            coef = dt * wi
            for j in range(M):
                gP[i, j] += coef * g[j]
        for j in range(M):
            gmu[j] += dt * u[j] * (Pg[j] - g[j])
        for j in range(M):
            g[j] = g[j] + dt * mu[j] * du[j] * (Pg[j] - g[j])
    for k in range(M):
        gP[k, k] = 0.0
    return err, gP, gmu


def _ssa_sample_grid_loops(P, mu, s, x0, dt, H, rng):
    M = x0.shape[0]
    x = x0.copy()
    out = np.empty((H, M))
    rates = np.empty(M * M)
    t = 0.0
    g = 0
    while g < H:
        total = 0.0
        f = 0
        for i in range(M):
            xi = x[i]
            cap = s[i]
            u = xi if xi < cap else cap
            w = mu[i] * u
            for j in range(M):
                r = w * P[i, j]
                rates[f] = r
                total += r
                f += 1
        if total <= 0.0:
            while g < H:
                for k in range(M):
                    out[g, k] = x[k]
                g += 1
            break
        u1 = rng.random()
        tnext = t + (-math.log1p(-u1)) / total
        # grid points strictly before the event keep the current state;
        # a point exactly at the event time takes the post-event state
        while g < H and g * dt < tnext:
            for k in range(M):
                out[g, k] = x[k]
            g += 1
        if g >= H:
            break
        u2 = rng.random()
        target = u2 * total
        sel = -1
        acc = 0.0
        for f in range(M * M):
            acc += rates[f]
            if target < acc:
                sel = f
                break
        if sel < 0:
            for f in range(M * M - 1, -1, -1):
                if rates[f] > 0.0:
                    sel = f
                    break
        i = sel // M
        j = sel % M
        x[i] -= 1
        x[j] += 1
        t = tnext
    return out


def _ssa_path_loops(P, mu, s, x0, T, rng):
    M = x0.shape[0]
    cap = 256
    times = np.empty(cap)
    states = np.empty((cap, M), np.int64)
    times[0] = 0.0
    for k in range(M):
        states[0, k] = x0[k]
    n = 1
    x = x0.copy()
    rates = np.empty(M * M)
    t = 0.0
    while True:
        total = 0.0
        f = 0
        for i in range(M):
            xi = x[i]
            ci = s[i]
            u = xi if xi < ci else ci
            w = mu[i] * u
            for j in range(M):
                r = w * P[i, j]
                rates[f] = r
                total += r
                f += 1
        if total <= 0.0:
            break
        u1 = rng.random()
        tnext = t + (-math.log1p(-u1)) / total
        if tnext > T:
            break
        u2 = rng.random()
        target = u2 * total
        sel = -1
        acc = 0.0
        for f in range(M * M):
            acc += rates[f]
            if target < acc:
                sel = f
                break
        if sel < 0:
            for f in range(M * M - 1, -1, -1):
                if rates[f] > 0.0:
                    sel = f
                    break
        i = sel // M
        j = sel % M
        x[i] -= 1
        x[j] += 1
        if n == cap:
            cap *= 2
            new_times = np.empty(cap)
            new_states = np.empty((cap, M), np.int64)
            new_times[:n] = times[:n]
            new_states[:n] = states[:n]
            times = new_times
            states = new_states
        times[n] = tnext
        for k in range(M):
            states[n, k] = x[k]
        n += 1
        t = tnext
    return times[:n].copy(), states[:n].copy()


# ---------------------------------------------------------------------------
# pure-numpy fallbacks
# ---------------------------------------------------------------------------


def _euler_forward_numpy(P, mu, s, x0, dt, H):
    M = x0.shape[0]
    traj = np.empty((H, M))
    traj[0] = x0
    x = x0.astype(np.float64)
    for h in range(1, H):
        w = mu * np.minimum(x, s)
        x = x + dt * (w @ P - w)
        traj[h] = x
    return traj


def _euler_backward_numpy(P, mu, s, samples, traj, dt):
    H, M = samples.shape
    N = float(samples[0].sum())
    scale = 100.0 / (2.0 * N)

    gaps = np.abs(samples[1:] - traj[1:]).sum(axis=1)
    hstar = int(np.argmax(gaps)) + 1  # argmax keeps the lowest index on ties
    err = float(gaps[hstar - 1]) * scale

    g = -scale * np.sign(samples[hstar] - traj[hstar])
    gP = np.zeros((M, M))
    gmu = np.zeros(M)
    for h in range(hstar, 0, -1):
        xp = traj[h - 1]
        u = np.minimum(xp, s)
        du = (xp <= s).astype(np.float64)
        Pg = P @ g
        gP += dt * np.outer(mu * u, g)
        gmu += dt * u * (Pg - g)
        g = g + dt * mu * du * (Pg - g)
    np.fill_diagonal(gP, 0.0)
    return err, gP, gmu


def _ssa_sample_grid_numpy(P, mu, s, x0, dt, H, rng):
    M = x0.shape[0]
    x = x0.copy()
    out = np.empty((H, M))
    t = 0.0
    g = 0
    n_events = M * M
    while g < H:
        w = mu * np.minimum(x, s)
        cum = np.cumsum((w[:, None] * P).ravel())
        total = cum[-1]
        if total <= 0.0:
            out[g:] = x
            break
        u1 = rng.random()
        tnext = t + (-math.log1p(-u1)) / total
        while g < H and g * dt < tnext:
            out[g] = x
            g += 1
        if g >= H:
            break
        u2 = rng.random()
        sel = int(np.searchsorted(cum, u2 * total, side="right"))
        if sel >= n_events:
            sel = int(np.flatnonzero(np.diff(cum, prepend=0.0) > 0.0)[-1])
        x[sel // M] -= 1
        x[sel % M] += 1
        t = tnext
    return out


def _ssa_path_numpy(P, mu, s, x0, T, rng):
    M = x0.shape[0]
    times = [0.0]
    states = [x0.copy()]
    x = x0.copy()
    t = 0.0
    n_events = M * M
    while True:
        w = mu * np.minimum(x, s)
        cum = np.cumsum((w[:, None] * P).ravel())
        total = cum[-1]
        if total <= 0.0:
            break
        u1 = rng.random()
        tnext = t + (-math.log1p(-u1)) / total
        if tnext > T:
            break
        u2 = rng.random()
        sel = int(np.searchsorted(cum, u2 * total, side="right"))
        if sel >= n_events:
            sel = int(np.flatnonzero(np.diff(cum, prepend=0.0) > 0.0)[-1])
        x[sel // M] -= 1
        x[sel % M] += 1
        times.append(tnext)
        states.append(x.copy())
        t = tnext
    return np.array(times), np.array(states, dtype=np.int64)


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

euler_forward_numba = None
euler_backward_numba = None
ssa_sample_grid_numba = None
ssa_path_numba = None

if _numba_disabled():
    BACKEND = "numpy"
else:
    try:
        from numba import njit

        euler_forward_numba = njit(cache=True)(_euler_forward_loops)
        euler_backward_numba = njit(cache=True)(_euler_backward_loops)
        ssa_sample_grid_numba = njit(cache=True)(_ssa_sample_grid_loops)
        ssa_path_numba = njit(cache=True)(_ssa_path_loops)
        BACKEND = "numba"
    except ImportError:
        BACKEND = "numpy"

if BACKEND == "numba":
    euler_forward = euler_forward_numba
    euler_backward = euler_backward_numba
    ssa_sample_grid = ssa_sample_grid_numba
    ssa_path = ssa_path_numba
else:
    euler_forward = _euler_forward_numpy
    euler_backward = _euler_backward_numpy
    ssa_sample_grid = _ssa_sample_grid_numpy
    ssa_path = _ssa_path_numpy
