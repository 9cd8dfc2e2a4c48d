"""Euler-Maruyama batch kernels with two-sided exit detection.

The drift is piecewise constant with optional smooth ramps of half-width
``delta`` at each jump (the mollified version used by the vanishing-noise
schemes).  Exit checks use the Brownian-bridge crossing probability per
step, which removes the sqrt(dt) barrier-detection bias of the naive
sampled-maximum rule.

Two implementations: a numba njit(parallel) per-path loop and a pure-numpy
lockstep loop, selected via DISCFLOW_NO_NUMBA.  Both consume the same
stateless counter streams: path i uses slots (4k .. 4k+3) at step k, so
results do not depend on the backend's scheduling or batching.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import USE_NUMBA
from .rng import GOLDEN, MASK64, _INV53, _MIX_A, _MIX_B, TWO_PI

__all__ = ["sde_exit_batch", "drift_eval_array", "backend"]


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# shared drift evaluation (vectorized reference implementation)
# ---------------------------------------------------------------------------


def _ramp_array(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    out[u >= 1.0] = 1.0
    mid = (u > 0.0) & (u < 1.0)
    um = u[mid]
    out[mid] = 1.0 / (1.0 + np.exp(1.0 / um - 1.0 / (1.0 - um)))
    return out


def drift_eval_array(x: np.ndarray, breaks: np.ndarray, values: np.ndarray,
                     delta: float) -> np.ndarray:
    """Piecewise-constant drift with smooth ramps of half-width delta."""
    x = np.asarray(x, dtype=float)
    if breaks.size == 0:
        return np.full_like(x, values[0])
    if delta <= 0.0:
        idx = np.searchsorted(breaks, x, side="right")
        return values[idx]
    out = np.full_like(x, values[0])
    for j in range(breaks.size):
        u = (x - breaks[j] + delta) / (2.0 * delta)
        out = out + (values[j + 1] - values[j]) * _ramp_array(u)
    return out


# ---------------------------------------------------------------------------
# numpy lockstep implementation
# ---------------------------------------------------------------------------

_U = np.uint64
_GOLD_U = _U(GOLDEN)
_A_U = _U(_MIX_A)
_B_U = _U(_MIX_B)


def _mix_u64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U(30))) * _A_U
    z = (z ^ (z >> _U(27))) * _B_U
    return z ^ (z >> _U(31))


def _uniform(keys: np.ndarray, ctr: int) -> np.ndarray:
    r = _mix_u64(keys + _mix_u64(np.full(keys.shape, (ctr * GOLDEN) & MASK64,
                                         dtype=np.uint64)))
    return ((r >> _U(11)).astype(np.float64) + 1.0) * _INV53


def _sde_exit_numpy(keys, x0, breaks, values, delta, sigma, lo, hi,
                    horizon, n_steps, occ_lo, occ_hi):
    n = keys.size
    dt = horizon / n_steps
    sq = sigma * math.sqrt(dt)
    x = np.full(n, x0, dtype=float)
    exit_code = np.zeros(n, dtype=np.int8)
    exit_time = np.full(n, horizon, dtype=float)
    final_x = np.full(n, x0, dtype=float)
    occupation = np.zeros(n, dtype=float)
    alive = np.ones(n, dtype=bool)
    inv_var = 0.0 if sigma == 0.0 else 2.0 / (sigma * sigma * dt)
    for k in range(n_steps):
        if not alive.any():
            break
        ka = keys[alive]
        xa = x[alive]
        base = 4 * k
        u1 = _uniform(ka, base)
        u2 = _uniform(ka, base + 1)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)
        if occ_lo < occ_hi:
            occupation[alive] += dt * ((xa >= occ_lo) & (xa <= occ_hi))
        g = drift_eval_array(xa, breaks, values, delta)
        xn = xa + g * dt + sq * z
        t_now = (k + 1) * dt
        hit_hi = xn >= hi
        hit_lo = (xn <= lo) & ~hit_hi
        inside = ~(hit_hi | hit_lo)
        if sigma > 0.0 and (math.isfinite(hi) or math.isfinite(lo)):
            ub1 = _uniform(ka, base + 2)
            ub2 = _uniform(ka, base + 3)
            if math.isfinite(hi):
                p_hi = np.exp(-np.maximum(hi - xa, 0.0)
                              * np.maximum(hi - xn, 0.0) * inv_var)
                bridge_hi = inside & (ub1 < p_hi)
                hit_hi |= bridge_hi
                inside &= ~bridge_hi
            if math.isfinite(lo):
                p_lo = np.exp(-np.maximum(xa - lo, 0.0)
                              * np.maximum(xn - lo, 0.0) * inv_var)
                bridge_lo = inside & (ub2 < p_lo)
                hit_lo |= bridge_lo
                inside &= ~bridge_lo
        idx = np.flatnonzero(alive)
        hi_idx = idx[hit_hi]
        lo_idx = idx[hit_lo]
        exit_code[hi_idx] = 2
        exit_code[lo_idx] = 1
        exit_time[hi_idx] = t_now
        exit_time[lo_idx] = t_now
        final_x[hi_idx] = hi
        final_x[lo_idx] = lo
        x[idx] = xn
        alive[hi_idx] = False
        alive[lo_idx] = False
    final_x[alive] = x[alive]
    return exit_code, exit_time, final_x, occupation


# ---------------------------------------------------------------------------
# numba implementation
# ---------------------------------------------------------------------------

if USE_NUMBA:
    import numba as nb

    _u64 = np.uint64
    _C30 = _u64(30)
    _C27 = _u64(27)
    _C31 = _u64(31)
    _C11 = _u64(11)
    _CA = _u64(_MIX_A)
    _CB = _u64(_MIX_B)
    _CG = _u64(GOLDEN)

    @nb.njit(cache=True, inline="always")
    def _nb_mix(z):
        z = (z ^ (z >> _C30)) * _CA
        z = (z ^ (z >> _C27)) * _CB
        return z ^ (z >> _C31)

    @nb.njit(cache=True, inline="always")
    def _nb_uniform(key, ctr):
        r = _nb_mix(key + _nb_mix(ctr * _CG))
        return (np.float64(r >> _C11) + 1.0) * _INV53

    @nb.njit(cache=True, inline="always")
    def _nb_drift(x, breaks, values, delta):
        if breaks.size == 0:
            return values[0]
        if delta <= 0.0:
            j = np.searchsorted(breaks, x, side="right")
            return values[j]
        out = values[0]
        for j in range(breaks.size):
            u = (x - breaks[j] + delta) / (2.0 * delta)
            if u >= 1.0:
                r = 1.0
            elif u <= 0.0:
                r = 0.0
            else:
                r = 1.0 / (1.0 + np.exp(1.0 / u - 1.0 / (1.0 - u)))
            out = out + (values[j + 1] - values[j]) * r
        return out

    @nb.njit(cache=True, parallel=True)
    def _sde_exit_numba(keys, x0, breaks, values, delta, sigma, lo, hi,
                        horizon, n_steps, occ_lo, occ_hi):
        n = keys.shape[0]
        dt = horizon / n_steps
        sq = sigma * np.sqrt(dt)
        exit_code = np.zeros(n, dtype=np.int8)
        exit_time = np.full(n, horizon)
        final_x = np.full(n, x0)
        occupation = np.zeros(n)
        inv_var = 0.0 if sigma == 0.0 else 2.0 / (sigma * sigma * dt)
        use_bridge = sigma > 0.0
        hi_fin = np.isfinite(hi)
        lo_fin = np.isfinite(lo)
        track_occ = occ_lo < occ_hi
        for i in nb.prange(n):
            key = keys[i]
            x = x0
            code = np.int8(0)
            t_exit = horizon
            occ = 0.0
            for k in range(n_steps):
                base = _u64(4 * k)
                u1 = _nb_uniform(key, base)
                u2 = _nb_uniform(key, base + _u64(1))
                z = np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)
                if track_occ and occ_lo <= x <= occ_hi:
                    occ += dt
                g = _nb_drift(x, breaks, values, delta)
                xn = x + g * dt + sq * z
                t_now = (k + 1) * dt
                if hi_fin and xn >= hi:
                    code = np.int8(2)
                    t_exit = t_now
                    x = hi
                    break
                if lo_fin and xn <= lo:
                    code = np.int8(1)
                    t_exit = t_now
                    x = lo
                    break
                if use_bridge and (hi_fin or lo_fin):
                    crossed = False
                    if hi_fin:
                        d1 = hi - x
                        d2 = hi - xn
                        if d1 < 0.0:
                            d1 = 0.0
                        if d2 < 0.0:
                            d2 = 0.0
                        p_hi = np.exp(-d1 * d2 * inv_var)
                        if _nb_uniform(key, base + _u64(2)) < p_hi:
                            code = np.int8(2)
                            t_exit = t_now
                            x = hi
                            crossed = True
                    if not crossed and lo_fin:
                        d1 = x - lo
                        d2 = xn - lo
                        if d1 < 0.0:
                            d1 = 0.0
                        if d2 < 0.0:
                            d2 = 0.0
                        p_lo = np.exp(-d1 * d2 * inv_var)
                        if _nb_uniform(key, base + _u64(3)) < p_lo:
                            code = np.int8(1)
                            t_exit = t_now
                            x = lo
                            crossed = True
                    if crossed:
                        break
                x = xn
            exit_code[i] = code
            exit_time[i] = t_exit
            final_x[i] = x
            occupation[i] = occ
        return exit_code, exit_time, final_x, occupation


def sde_exit_batch(keys: np.ndarray, x0: float, breaks: np.ndarray,
                   values: np.ndarray, delta: float, sigma: float,
                   lo: float, hi: float, horizon: float, dt: float,
                   occ_window: tuple[float, float] | None = None):
    """Simulate paths until two-sided exit or the horizon.

    Returns (exit_code, exit_time, final_x, occupation): code 0 = no exit
    (final_x is the time-horizon position), 1 = low barrier, 2 = high
    barrier.  dt is rounded down so an integer number of steps covers the
    horizon; occupation is the time spent inside occ_window before exit.
    """
    if dt <= 0 or horizon <= 0:
        raise ValueError("dt and horizon must be positive")
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-12)))
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    breaks = np.ascontiguousarray(breaks, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    occ_lo, occ_hi = occ_window if occ_window is not None else (1.0, -1.0)
    args = (keys, float(x0), breaks, values, float(delta), float(sigma),
            float(lo), float(hi), float(horizon), n_steps,
            float(occ_lo), float(occ_hi))
    if USE_NUMBA:
        return _sde_exit_numba(*args)
    return _sde_exit_numpy(*args)
