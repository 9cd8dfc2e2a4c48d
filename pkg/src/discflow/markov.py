"""Random paths and transition kernels for scenarios with waits and branches.

Between random events a path follows the deterministic flow.  Random
ingredients: an exponential holding time (with the point's rate) whenever
the path sits at a wait point, and a single direction draw when it starts
at a branch point.  Every path consumes its own counter-based stream, so
ensembles are reproducible and order-independent.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import hypoexp
from .flow import (MonotoneInterval, _advance_in_interval, _raw_travel, classify,
                   reach_time)
from .metrics import CDFCurve
from .rng import Stream, stream_key
from .scenario import Flavor, SemigroupSpec, same_point


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    x0: float
    x1: float
    kind: str  # "wait" | "move" | "stay"
    interval: MonotoneInterval | None = None


@dataclass
class SamplePath:
    spec: SemigroupSpec
    x_start: float
    horizon: float
    segments: list[Segment]
    branch_choice: int | None = None

    def position(self, t: float) -> float:
        if t <= 0.0:
            return self.x_start
        t = min(t, self.horizon)
        starts = [s.t0 for s in self.segments]
        k = max(0, bisect.bisect_right(starts, t) - 1)
        seg = self.segments[k]
        if seg.kind != "move":
            return seg.x0
        pos, _ = _advance_in_interval(self.spec, seg.interval, seg.x0, t - seg.t0)
        return pos

    @property
    def terminal(self) -> float:
        return self.segments[-1].x1 if self.segments else self.x_start

    def first_hit(self, levels) -> tuple[float, float] | None:
        """Earliest (time, level) at which the path reaches one of the levels.

        Levels equal to the starting point are ignored; hits are exact
        (travel-time inversion inside the crossing segment).
        """
        levels = [lv for lv in levels if not same_point(lv, self.x_start)]
        for seg in self.segments:
            if seg.kind != "move":
                continue
            a, b = seg.x0, seg.x1
            up = seg.interval.direction > 0
            hits = []
            for lv in levels:
                crossed = (a < lv <= b) if up else (b <= lv < a)
                if same_point(lv, a):
                    crossed = False
                if crossed:
                    hits.append((seg.t0 + reach_time(self.spec, seg.interval, a, lv), lv))
            if hits:
                return min(hits)
        return None


def _next_wait_ahead(spec: SemigroupSpec, iv: MonotoneInterval, x: float):
    if iv.direction > 0:
        cands = [w for w in spec.wait_points if x < w <= iv.hi and not same_point(w, x)]
        return min(cands) if cands else None
    cands = [w for w in spec.wait_points if iv.lo <= w < x and not same_point(w, x)]
    return max(cands) if cands else None


def _simulate(spec: SemigroupSpec, x0: float, horizon: float, stream: Stream,
              collect: bool):
    segments: list[Segment] = [] if collect else None
    t = 0.0
    x = x0
    branch_choice = None
    ivs = classify(spec)

    def add(t0, t1, a, b, kind, iv=None):
        if collect:
            segments.append(Segment(t0, t1, a, b, kind, iv))

    while t < horizon:
        lam = spec.wait_rate(x)
        if lam is not None:
            hold = stream.exponential(lam)
            end = min(t + hold, horizon)
            add(t, end, x, x, "wait")
            t = t + hold
            if t >= horizon:
                return segments, x, branch_choice
        inc, dec = ivs.at(x)
        if inc is not None and dec is not None:
            theta = spec.theta(x)
            if theta is None:
                raise ValueError(f"both directions admissible at {x:g} but no branch law")
            up = stream.bernoulli(theta)
            iv = inc if up else dec
            branch_choice = 1 if up else -1
        elif inc is not None:
            iv = inc
        elif dec is not None:
            iv = dec
        else:
            add(t, horizon, x, x, "stay")
            return segments, x, branch_choice
        nxt_wait = _next_wait_ahead(spec, iv, x)
        if nxt_wait is not None:
            tau = reach_time(spec, iv, x, nxt_wait)
            if math.isfinite(tau) and t + tau < horizon:
                add(t, t + tau, x, nxt_wait, "move", iv)
                t += tau
                x = nxt_wait
                continue
        pos, _ = _advance_in_interval(spec, iv, x, horizon - t)
        add(t, horizon, x, pos, "move", iv)
        return segments, pos, branch_choice
    return segments, x, branch_choice


def sample_path(spec: SemigroupSpec, x0: float, horizon: float, seed: int,
                sample_index: int = 0) -> SamplePath:
    """One random trajectory, reproducible from (seed, sample_index)."""
    if spec.branch_phi:
        raise ValueError("scenario selects branches deterministically; use flow()")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    stream = Stream(stream_key(seed, sample_index))
    segments, terminal, branch = _simulate(spec, x0, horizon, stream, collect=True)
    return SamplePath(spec, x0, horizon, segments, branch)


def terminal_positions(spec: SemigroupSpec, x0: float, t: float, n_samples: int,
                       seed: int) -> np.ndarray:
    if spec.branch_phi:
        raise ValueError("scenario selects branches deterministically; use flow()")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    out = np.empty(n_samples)
    for i in range(n_samples):
        stream = Stream(stream_key(seed, i))
        _, pos, _ = _simulate(spec, x0, t, stream, collect=False)
        out[i] = pos
    return out


# ---------------------------------------------------------------------------
# transition kernels
# ---------------------------------------------------------------------------


class TransitionKernelCDF:
    """x -> P_t(x0, (-inf, x]): finite atoms plus a continuous part."""

    def __init__(self, fn, atoms, lo: float, hi: float):
        self._fn = fn
        self.atoms = tuple(atoms)
        self.lo = lo
        self.hi = hi

    def eval(self, x: float) -> float:
        return float(self._fn(float(x)))

    __call__ = eval

    def evaluate(self, xs) -> np.ndarray:
        return np.array([self.eval(x) for x in np.asarray(xs, dtype=float)])

    def total_mass(self) -> float:
        return self.eval(self.hi + 1.0)

    def atom_mass(self) -> float:
        return float(sum(m for _, m in self.atoms))

    def curve(self, window: tuple[float, float] | None = None, n: int = 2001) -> CDFCurve:
        lo, hi = window if window is not None else (self.lo - 0.5, self.hi + 0.5)
        knots = np.linspace(lo, hi, n)
        locs = np.array([a for a, _ in self.atoms if lo <= a <= hi])
        if locs.size:
            knots = np.union1d(knots, np.concatenate([locs, locs - 1e-12]))
        return CDFCurve(knots, self.evaluate(knots), "step")

    @staticmethod
    def point_mass(x0: float) -> "TransitionKernelCDF":
        return TransitionKernelCDF(lambda x: 1.0 if x >= x0 else 0.0,
                                   [(x0, 1.0)], x0, x0)

    @staticmethod
    def from_samples(samples: np.ndarray) -> "TransitionKernelCDF":
        samples = np.sort(np.asarray(samples, dtype=float))
        xs, counts = np.unique(samples, return_counts=True)
        cum = np.cumsum(counts) / samples.size
        atoms = [(float(x), float(c) / samples.size) for x, c in zip(xs, counts)]

        def fn(x):
            k = np.searchsorted(xs, x, side="right")
            return 0.0 if k == 0 else float(cum[k - 1])

        return TransitionKernelCDF(fn, atoms, float(xs[0]), float(xs[-1]))

    @staticmethod
    def mixture(parts: list[tuple[float, "TransitionKernelCDF"]]) -> "TransitionKernelCDF":
        parts = [(w, k) for w, k in parts if w > 0.0]

        def fn(x):
            return sum(w * k.eval(x) for w, k in parts)

        atom_map: dict[float, float] = {}
        for w, k in parts:
            for loc, m in k.atoms:
                atom_map[loc] = atom_map.get(loc, 0.0) + w * m
        lo = min(k.lo for _, k in parts)
        hi = max(k.hi for _, k in parts)
        return TransitionKernelCDF(fn, sorted(atom_map.items()), lo, hi)


def empirical_kernel(spec: SemigroupSpec, x0: float, t: float, n_samples: int,
                     seed: int) -> TransitionKernelCDF:
    """Empirical law of the time-t position over independent sampled paths."""
    return TransitionKernelCDF.from_samples(
        terminal_positions(spec, x0, t, n_samples, seed))


def _directional_chain(spec: SemigroupSpec, iv: MonotoneInterval, x0: float):
    """Wait chain along the deterministic route from x0 inside iv."""
    up = iv.direction > 0
    events = []
    if spec.wait_rate(x0) is not None:
        events.append((x0, 0.0, spec.wait_rate(x0)))
    if up:
        pts = sorted(w for w in spec.wait_points if x0 < w <= iv.hi)
    else:
        pts = sorted((w for w in spec.wait_points if iv.lo <= w < x0), reverse=True)
    for w in pts:
        seg = (x0, w) if up else (w, x0)
        tau = _raw_travel(spec, seg[0], seg[1], iv.direction)
        if not math.isfinite(tau):
            break
        events.append((w, tau, spec.wait_rate(w)))
    end = iv.hi if up else iv.lo
    if math.isfinite(end):
        seg = (x0, end) if up else (end, x0)
        t_end = _raw_travel(spec, seg[0], seg[1], iv.direction)
    else:
        end = math.copysign(math.inf, iv.direction)
        t_end = math.inf
    return events, end, t_end


def _one_sided_kernel(spec: SemigroupSpec, iv: MonotoneInterval, x0: float,
                      t: float) -> TransitionKernelCDF:
    events, end, t_end = _directional_chain(spec, iv, x0)
    rates = [lam for _, _, lam in events]
    travels = [tau for _, tau, _ in events]
    positions = [w for w, _, _ in events]
    up = iv.direction > 0
    fld = spec.field
    if up:
        knots = sorted(set([x0] + [b for b in fld.breakpoints if x0 < b < end]))
    else:
        knots = sorted(set([b for b in fld.breakpoints if end < b < x0] + [x0]))
    reach_cap = abs(spec.field.bound_M * t) + 1.0
    far = x0 + iv.direction * reach_cap
    if math.isfinite(end):
        grid_pts = knots + [end]
    else:
        grid_pts = knots + [far]
    grid_pts = sorted(set(grid_pts))
    grid_times = []
    for g in grid_pts:
        seg = (x0, g) if up else (g, x0)
        grid_times.append(_raw_travel(spec, seg[0], seg[1], iv.direction))
    gp = np.array(grid_pts)
    gt = np.array(grid_times)

    def travel_to(x: float) -> float:
        if up:
            if x <= x0:
                return 0.0
            if x >= gp[-1]:
                return float(gt[-1])
            return float(np.interp(x, gp, gt))
        if x >= x0:
            return 0.0
        if x <= gp[0]:
            return float(gt[0])
        rev_p = -gp[::-1]
        rev_t = gt[::-1]
        return float(np.interp(-x, rev_p, rev_t))

    def fn(x: float) -> float:
        if up:
            if x < x0:
                return 0.0
            if math.isfinite(end) and x >= end:
                return 1.0
            k = sum(1 for w in positions if w <= x)
            u = t - travel_to(x)
            return float(hypoexp.survival(rates[:k], u))
        if x >= x0:
            return 1.0
        if math.isfinite(end) and x < end:
            return 0.0
        # arrived at level x iff travel plus the holds strictly above are done
        k = sum(1 for w in positions if w > x)
        u = t - travel_to(x)
        return float(hypoexp.cdf(rates[:k], u))

    atoms = []
    for i, (w, tau, lam) in enumerate(events):
        u = t - tau
        if u < 0:
            break
        m = float(hypoexp.survival(rates[:i + 1], u) - hypoexp.survival(rates[:i], u))
        if m > 0:
            atoms.append((w, m))
    if math.isfinite(end) and math.isfinite(t_end) and t_end <= t:
        m_end = float(hypoexp.cdf(rates, t - t_end))
        if m_end > 0:
            atoms.append((end, m_end))
    lo = min(x0, end if math.isfinite(end) else far)
    hi = max(x0, end if math.isfinite(end) else far)
    return TransitionKernelCDF(fn, sorted(atoms), lo, hi)


def analytic_kernel(spec: SemigroupSpec, x0: float, t: float) -> TransitionKernelCDF:
    """Closed-form kernel for piecewise-constant scenarios without mass.

    The position along the deterministic route is determined by how many
    exponential holds have elapsed; run lengths between waits enter through
    the travel times and the combined holding law is hypoexponential.
    """
    if spec.field.flavor != Flavor.PIECEWISE_CONSTANT:
        raise ValueError("analytic kernel needs a piecewise-constant field")
    if spec.measure.kind != "zero" and spec.measure.total_mass() > 0:
        raise ValueError("analytic kernel needs a vanishing measure")
    if t < 0:
        raise ValueError("time must be nonnegative")
    if spec.branch_phi:
        raise ValueError("scenario selects branches deterministically; use flow()")
    ivs = classify(spec)
    inc, dec = ivs.at(x0)
    if inc is None and dec is None:
        return TransitionKernelCDF.point_mass(x0)
    if inc is not None and dec is not None:
        theta = spec.theta(x0)
        if theta is None:
            raise ValueError(f"both directions admissible at {x0:g} but no branch law")
        return TransitionKernelCDF.mixture([
            (theta, _one_sided_kernel(spec, inc, x0, t)),
            (1.0 - theta, _one_sided_kernel(spec, dec, x0, t)),
        ])
    iv = inc if inc is not None else dec
    return _one_sided_kernel(spec, iv, x0, t)
