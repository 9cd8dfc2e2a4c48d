"""Local-to-global kernel composition through stopped measures.

Paths started inside a gap between consecutive midpoints are stopped the
first time they reach a midpoint; the resulting law lives on a comb-shaped
set (vertical hitting-time segments over each midpoint plus a terminal
horizontal slice).  First-passage laws of single gaps compose by Stieltjes
convolution, and the time-t kernel is assembled gap by gap from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import hypoexp
from .flow import _raw_travel, classify
from .markov import TransitionKernelCDF, sample_path
from .metrics import CDFCurve
from .rng import stream_keys
from .scenario import Flavor, SemigroupSpec, same_point


def midpoints(spec: SemigroupSpec) -> tuple[float, ...]:
    """Midpoints of consecutive special points (stops, waits, branches, jumps)."""
    pts = spec.special_points()
    if len(pts) < 2:
        raise ValueError("need at least two special points to take midpoints")
    return tuple(0.5 * (a + b) for a, b in zip(pts, pts[1:]))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


class MarkovPathSampler:
    """Exact event-driven paths of a wait/branch scenario."""

    def __init__(self, spec: SemigroupSpec):
        self.spec = spec

    def stopped_samples(self, xbar: float, lo: float, hi: float, horizon: float,
                        n: int, seed: int):
        """(hit_code, hit_time, position): code 0 none, 1 low, 2 high."""
        codes = np.zeros(n, dtype=np.int8)
        times = np.full(n, horizon, dtype=float)
        pos = np.empty(n, dtype=float)
        for i in range(n):
            path = sample_path(self.spec, xbar, horizon, seed, i)
            hit = path.first_hit([lo, hi])
            if hit is not None and hit[0] <= horizon:
                t_hit, level = hit
                codes[i] = 2 if level >= xbar else 1
                times[i] = t_hit
                pos[i] = level
            else:
                pos[i] = path.terminal
        return codes, times, pos


class SDEPathSampler:
    """Euler-Maruyama paths with per-step two-sided barrier checks."""

    def __init__(self, breaks, values, sigma: float, dt: float, delta: float = 0.0,
                 bridge: bool = True):
        self.breaks = np.asarray(breaks, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.sigma = float(sigma)
        self.dt = float(dt)
        self.delta = float(delta)
        self.bridge = bridge

    @staticmethod
    def from_spec(spec: SemigroupSpec, sigma: float, dt: float, delta: float = 0.0):
        if spec.field.flavor != Flavor.PIECEWISE_CONSTANT:
            raise ValueError("SDE sampler needs a piecewise-constant field")
        breaks = np.asarray(spec.field.breakpoints, dtype=float)
        values = np.array([spec.field.pieces[0].evaluate(breaks[0] - 1.0 if breaks.size else 0.0)]
                          + [spec.field.pieces[k + 1].evaluate(
                              0.5 * (breaks[k] + (breaks[k + 1] if k + 1 < breaks.size
                                                  else breaks[k] + 2.0)))
                             for k in range(breaks.size)])
        return SDEPathSampler(breaks, values, sigma, dt, delta)

    def stopped_samples(self, xbar: float, lo: float, hi: float, horizon: float,
                        n: int, seed: int):
        from .kernels import sde_exit_batch

        keys = stream_keys(seed, n)
        code, times, pos, _ = sde_exit_batch(keys, xbar, self.breaks, self.values,
                                             self.delta, self.sigma, lo, hi,
                                             horizon, self.dt)
        return code, times, pos


# ---------------------------------------------------------------------------
# stopped measures
# ---------------------------------------------------------------------------


@dataclass
class StoppedMeasure:
    """Empirical law of (first stop time ^ t, position) on the comb set."""

    t_horizon: float
    y_points: tuple[float, ...]
    hit_times: dict[float, np.ndarray]  # level -> sorted hit times
    terminal: np.ndarray                # positions of paths alive at t
    n: int

    def vertical_cdf(self, level: float, s) -> np.ndarray:
        ts = self.hit_times.get(level)
        s = np.asarray(s, dtype=float)
        if ts is None or ts.size == 0:
            return np.zeros(s.shape)
        return np.searchsorted(ts, s, side="right") / self.n

    def vertical_mass(self, level: float) -> float:
        ts = self.hit_times.get(level)
        return 0.0 if ts is None else ts.size / self.n

    def terminal_cdf(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.searchsorted(np.sort(self.terminal), y, side="right") / self.n

    def total_mass(self) -> float:
        return (sum(ts.size for ts in self.hit_times.values())
                + self.terminal.size) / self.n

    def distribution_G(self, y) -> np.ndarray:
        """Terminal mass up to y plus full vertical masses at levels <= y."""
        y = np.asarray(y, dtype=float)
        out = self.terminal_cdf(y)
        for level, ts in self.hit_times.items():
            out = out + (ts.size / self.n) * (y >= level)
        return out


def stopped_measure(sampler, xbar: float, t: float, n: int, seed: int,
                    y_points) -> StoppedMeasure:
    """Push-forward of (first hit of a neighbouring midpoint ^ t, position)."""
    ys = sorted(y_points)
    if not ys or xbar < ys[0] - 1e-12 or xbar > ys[-1] + 1e-12:
        raise ValueError("start point is outside the midpoint range")
    at = next((k for k, y in enumerate(ys) if same_point(y, xbar)), None)
    if at is not None:
        lo = ys[at - 1] if at > 0 else -math.inf
        hi = ys[at + 1] if at + 1 < len(ys) else math.inf
    else:
        k = np.searchsorted(ys, xbar)
        lo = ys[k - 1] if k > 0 else -math.inf
        hi = ys[k] if k < len(ys) else math.inf
    codes, times, pos = sampler.stopped_samples(xbar, lo, hi, t, n, seed)
    hits: dict[float, np.ndarray] = {}
    if math.isfinite(lo):
        hits[lo] = np.sort(times[codes == 1])
    if math.isfinite(hi):
        hits[hi] = np.sort(times[codes == 2])
    return StoppedMeasure(t, tuple(ys), hits, pos[codes == 0], n)


def local_gamma(sampler, y_start: float, y_target: float, t: float, n: int,
                seed: int, y_block: float | None = None) -> CDFCurve:
    """First-passage CDF from y_start to y_target within t, y_block untouched."""
    up = y_target > y_start
    lo = (y_block if y_block is not None else -math.inf) if up else y_target
    hi = y_target if up else (y_block if y_block is not None else math.inf)
    codes, times, _ = sampler.stopped_samples(y_start, lo, hi, t, n, seed)
    want = 2 if up else 1
    ts = np.sort(times[codes == want])
    xs = np.concatenate([[0.0], ts, [t]])
    ys = np.concatenate([[0.0], np.arange(1, ts.size + 1) / n,
                         [ts.size / n]])
    return CDFCurve(xs, ys, "step")


# ---------------------------------------------------------------------------
# Stieltjes composition
# ---------------------------------------------------------------------------


def _as_grid_values(f, grid: np.ndarray) -> np.ndarray:
    if isinstance(f, CDFCurve):
        return np.asarray(f.eval(grid), dtype=float)
    if callable(f):
        return np.asarray(f(grid), dtype=float)
    arr = np.asarray(f, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError("grid mismatch for array-valued distribution function")
    return arr


def compose_step(f_prev, gamma, grid: np.ndarray) -> np.ndarray:
    """``F_next(tau) = int_0^tau Gamma(tau - z) dF_prev(z)`` on a shared grid.

    Cell masses of F_prev sit at cell midpoints (mass at the origin stays at
    the origin), giving an O(grid step) bias.
    """
    grid = np.asarray(grid, dtype=float)
    fp = _as_grid_values(f_prev, grid)
    locations = np.concatenate([[grid[0]], 0.5 * (grid[:-1] + grid[1:])])
    masses = np.concatenate([[fp[0]], np.diff(fp)])
    keep = masses > 0
    locations = locations[keep]
    masses = masses[keep]
    if locations.size == 0:
        return np.zeros_like(grid)
    lag = grid[:, None] - locations[None, :]
    if isinstance(gamma, CDFCurve):
        gv = np.asarray(gamma.eval(np.maximum(lag, 0.0)), dtype=float)
    elif callable(gamma):
        gv = np.asarray(gamma(np.maximum(lag, 0.0)), dtype=float)
    else:
        g_arr = np.asarray(gamma, dtype=float)
        gv = np.interp(np.maximum(lag, 0.0), grid, g_arr)
    gv = np.where(lag < 0.0, 0.0, gv)
    out = gv @ masses
    return np.minimum(np.maximum.accumulate(out), 1.0)


def stieltjes_eval(f_prev, g, grid: np.ndarray, tau: float) -> float:
    """``int_0^tau g(tau - z) dF_prev(z)`` with the same mass placement."""
    grid = np.asarray(grid, dtype=float)
    fp = _as_grid_values(f_prev, grid)
    locations = np.concatenate([[grid[0]], 0.5 * (grid[:-1] + grid[1:])])
    masses = np.concatenate([[fp[0]], np.diff(fp)])
    keep = (masses > 0) & (locations <= tau)
    if not keep.any():
        return 0.0
    lag = tau - locations[keep]
    if isinstance(g, CDFCurve):
        gv = np.asarray(g.eval(lag), dtype=float)
    else:
        gv = np.asarray(g(lag), dtype=float)
    return float(np.sum(gv * masses[keep]))


# ---------------------------------------------------------------------------
# analytic local laws and the global kernel
# ---------------------------------------------------------------------------


@dataclass
class GapLaw:
    """First-passage laws inside one gap of a monotone increasing chain."""

    y_lo: float
    y_hi: float
    waits: list[tuple[float, float]]     # (position, rate) strictly inside
    travel_knots: np.ndarray             # positions from y_lo upward
    travel_times: np.ndarray

    def travel(self, z: float) -> float:
        return float(np.interp(z, self.travel_knots, self.travel_times))

    def passage(self, z: float, tau) -> np.ndarray:
        """P(reach level z within tau) from y_lo; z in (y_lo, y_hi]."""
        rates = [lam for w, lam in self.waits if w < z]
        u = np.asarray(tau, dtype=float) - self.travel(z)
        return np.asarray(hypoexp.cdf(rates, u), dtype=float)

    def passed_beyond(self, z: float, tau) -> np.ndarray:
        """P(strictly above z within tau): the hold at z itself must finish."""
        rates = [lam for w, lam in self.waits if w <= z]
        u = np.asarray(tau, dtype=float) - self.travel(z)
        return np.asarray(hypoexp.cdf(rates, u), dtype=float)

    def gamma(self, tau) -> np.ndarray:
        return self.passage(self.y_hi, tau)


def local_laws_from_spec(spec: SemigroupSpec, xbar: float, t: float,
                         y_points) -> list[GapLaw]:
    """Analytic gap laws along the increasing route from xbar."""
    if spec.field.flavor != Flavor.PIECEWISE_CONSTANT:
        raise ValueError("analytic gap laws need a piecewise-constant field")
    if spec.measure.kind != "zero" and spec.measure.total_mass() > 0:
        raise ValueError("analytic gap laws need a vanishing measure")
    ivs = classify(spec)
    inc, dec = ivs.at(xbar)
    if inc is None or dec is not None:
        raise ValueError("the chain assembly needs a strictly increasing start")
    ys = sorted(y for y in y_points if xbar < y <= inc.hi)
    cap = xbar + spec.field.bound_M * t + 1.0
    stops_all = [xbar] + ys + [min(cap, inc.hi) if math.isfinite(inc.hi) else cap]
    laws = []
    for lo, hi in zip(stops_all, stops_all[1:]):
        if hi <= lo:
            continue
        waits = [(w, lam) for w, lam in spec.waits if lo < w < hi]
        knots = sorted(set([lo, hi] + [b for b in spec.field.breakpoints if lo < b < hi]
                           + [w for w, _ in waits]))
        times = [0.0]
        for a, b in zip(knots, knots[1:]):
            times.append(times[-1] + _raw_travel(spec, a, b, +1))
        laws.append(GapLaw(lo, hi, waits, np.array(knots), np.array(times)))
    return laws


def global_from_local(laws: list[GapLaw], xbar: float, t: float,
                      grid_n: int = 2001, z_per_gap: int = 65) -> TransitionKernelCDF:
    """Assemble the time-t kernel from gap laws by Stieltjes composition.

    The hitting-time law of each midpoint is propagated with compose_step;
    inside each gap the kernel value is one minus the convolution of the
    incoming hitting law with the gap's level-passage law.
    """
    grid = np.linspace(0.0, t, grid_n)
    f_prev = np.where(grid >= 0.0, 1.0, 0.0)  # unit mass at time 0 in gap 0
    zs_all = [np.array([xbar])]
    ks_all = [np.array([0.0])]
    for gap in laws:
        # a knot pair around each wait keeps the kernel's atom a sharp step
        z_knots = sorted(set(
            list(np.linspace(gap.y_lo, gap.y_hi, z_per_gap))
            + [w for w, _ in gap.waits]
            + [np.nextafter(w, -math.inf) for w, _ in gap.waits]))
        zs = np.array(z_knots[1:])  # strictly above y_lo
        kv = np.empty(zs.size)
        for j, z in enumerate(zs):
            kv[j] = 1.0 - stieltjes_eval(f_prev, lambda u, z=z: gap.passed_beyond(z, u),
                                         grid, t)
        zs_all.append(zs)
        ks_all.append(kv)
        f_prev = compose_step(f_prev, gap.gamma, grid)
    z_full = np.concatenate(zs_all)
    k_full = np.concatenate(ks_all)
    order = np.argsort(z_full)
    z_full = z_full[order]
    k_full = np.maximum.accumulate(np.clip(k_full[order], 0.0, 1.0))

    def fn(x: float) -> float:
        if x < xbar:
            return 0.0
        if x >= z_full[-1]:
            return 1.0
        return float(np.interp(x, z_full, k_full))

    return TransitionKernelCDF(fn, [], float(z_full[0]), float(z_full[-1]))
