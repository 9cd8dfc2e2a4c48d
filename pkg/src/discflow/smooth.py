"""Smooth flows approximating a deterministic semigroup.

Pipeline: classify the monotone intervals, insert nodes so that both the
node gaps and the crossing times stay below the resolution eps, replace the
field by piecewise-constant effective speeds (gap / crossing time), then
mollify with compactly supported ramps and rescale each segment so the
smooth reciprocal-speed integral reproduces the crossing times exactly.
The resulting ODE flow tracks the semigroup uniformly in time, with error
proportional to eps at admissible starting points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .flow import MonotoneInterval, _raw_travel, classify, flow_positions
from .scenario import SemigroupSpec, box_truncate, same_point

MOLL_FRACTION = 0.1  # ramp half-width relative to eps


class CalibrationError(RuntimeError):
    pass


def smoothstep(u):
    """C-infinity ramp: exactly 0 for u <= 0, exactly 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    out[u >= 1.0] = 1.0
    mid = (u > 0.0) & (u < 1.0)
    um = u[mid]
    expo = np.clip(1.0 / um - 1.0 / (1.0 - um), -700.0, 700.0)
    out[mid] = 1.0 / (1.0 + np.exp(expo))
    return out


# ---------------------------------------------------------------------------
# interval resolution (branch signs, box truncation)
# ---------------------------------------------------------------------------


def resolved_intervals(spec: SemigroupSpec) -> list[MonotoneInterval]:
    """Monotone intervals with branch points assigned to one side only."""
    ivs = classify(spec)
    out = []
    for iv in ivs.increase:
        if iv.closed_lo and math.isfinite(iv.lo):
            phi = spec.phi(iv.lo)
            dec_twin = next((d for d in ivs.decrease
                             if d.closed_hi and same_point(d.hi, iv.lo)), None)
            if dec_twin is not None and phi == -1:
                iv = MonotoneInterval(iv.lo, iv.hi, 1, closed_lo=False)
        out.append(iv)
    for iv in ivs.decrease:
        if iv.closed_hi and math.isfinite(iv.hi):
            phi = spec.phi(iv.hi)
            inc_twin = next((d for d in ivs.increase
                             if d.closed_lo and same_point(d.lo, iv.hi)), None)
            if inc_twin is not None and phi != -1:
                iv = MonotoneInterval(iv.lo, iv.hi, -1, closed_hi=False)
        out.append(iv)
    return out


# ---------------------------------------------------------------------------
# node insertion
# ---------------------------------------------------------------------------


@dataclass
class NodeSet:
    """Nodes and crossing times of one monotone interval at resolution eps."""

    interval: MonotoneInterval
    eps: float
    xs: np.ndarray           # ascending nodes
    taus: np.ndarray         # crossing time of (xs[k], xs[k+1])
    entry_closed: bool       # half-open entry end (node sits on the endpoint)
    zero_margins: list[tuple[float, float]]
    extension: tuple[float, float] | None  # entry-side speed extension span

    @property
    def direction(self) -> int:
        return self.interval.direction


def _greedy_nodes(spec: SemigroupSpec, start: float, stop: float, eps: float,
                  direction: int, max_nodes: int = 200000) -> tuple[np.ndarray, np.ndarray]:
    """Ascending-or-descending node walk with gap and crossing time < eps."""
    step_cap = 0.9 * eps
    up = stop > start
    nodes = [start]
    taus = []
    cur = start
    while (cur < stop) if up else (cur > stop):
        if len(nodes) > max_nodes:
            raise CalibrationError("node budget exceeded; eps too small for this scenario")
        cand = min(cur + step_cap, stop) if up else max(cur - step_cap, stop)
        seg = (cur, cand) if up else (cand, cur)
        tau = _raw_travel(spec, seg[0], seg[1], direction)
        if tau <= step_cap:
            nxt = cand
        else:
            lo_pos, hi_pos = (cur, cand) if up else (cand, cur)
            # monotone bisection for the point where the crossing time hits the cap
            for _ in range(80):
                mid = 0.5 * (lo_pos + hi_pos)
                seg = (cur, mid) if up else (mid, cur)
                if _raw_travel(spec, seg[0], seg[1], direction) < step_cap:
                    if up:
                        lo_pos = mid
                    else:
                        hi_pos = mid
                else:
                    if up:
                        hi_pos = mid
                    else:
                        lo_pos = mid
                if abs(hi_pos - lo_pos) < 1e-12 * max(1.0, abs(hi_pos)):
                    break
            nxt = 0.5 * (lo_pos + hi_pos)
            if same_point(nxt, cur, 1e-11):
                raise CalibrationError(f"no progress inserting nodes at {cur:g}")
            seg = (cur, nxt) if up else (nxt, cur)
            tau = _raw_travel(spec, seg[0], seg[1], direction)
        nodes.append(nxt)
        taus.append(tau)
        cur = nxt
    xs = np.array(nodes)
    ts = np.array(taus)
    if not up:
        xs = xs[::-1]
        ts = ts[::-1]
    return xs, ts


def build_nodes(spec: SemigroupSpec, eps: float, interval: MonotoneInterval) -> NodeSet:
    """Insert nodes in one interval: margins in (eps/3, eps), gaps and times < eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    lo, hi = interval.lo, interval.hi
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("interval must be bounded; truncate the scenario first")
    if hi - lo < eps:
        raise ValueError("interval shorter than eps; it should have been dropped")
    up = interval.direction > 0
    entry_closed = interval.closed_lo if up else interval.closed_hi
    margin = min(2.0 * eps / 3.0, (hi - lo) / 2.0)
    ext = None
    zero_margins = []
    if up:
        start = lo if entry_closed else lo + margin
        stop = hi - margin
        if entry_closed:
            ext = (lo - eps / 3.0, lo)
        else:
            zero_margins.append((lo + eps / 3.0, start))
        zero_margins.append((stop, hi - eps / 3.0))
    else:
        start = hi if entry_closed else hi - margin
        stop = lo + margin
        if entry_closed:
            ext = (hi, hi + eps / 3.0)
        else:
            zero_margins.append((start, hi - eps / 3.0))
        zero_margins.append((lo + eps / 3.0, stop))
    if (stop <= start) if up else (stop >= start):
        xs = np.array([0.5 * (lo + hi)])
        taus = np.array([])
    else:
        xs, taus = _greedy_nodes(spec, start, stop, eps, interval.direction)
    return NodeSet(interval, eps, xs, taus, entry_closed, zero_margins, ext)


# ---------------------------------------------------------------------------
# piecewise-constant effective speeds
# ---------------------------------------------------------------------------


@dataclass
class StepField:
    """Global piecewise-constant approximation built from the node sets."""

    eps: float
    node_sets: list[NodeSet]
    breaks: np.ndarray
    values: np.ndarray  # len(breaks) + 1, value on (breaks[j-1], breaks[j])

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breaks, x, side="right")
        return self.values[idx]

    __call__ = evaluate


def _node_blocks(ns: NodeSet) -> list[tuple[float, float, float]]:
    """(lo, hi, speed) blocks of one node set, zero margins included."""
    blocks = []
    sgn = ns.direction
    xs = ns.xs
    for k in range(len(ns.taus)):
        v = sgn * (xs[k + 1] - xs[k]) / ns.taus[k]
        blocks.append((xs[k], xs[k + 1], v))
    if ns.extension is not None and len(ns.taus) > 0:
        if sgn > 0:
            v = sgn * (xs[1] - xs[0]) / ns.taus[0]
            blocks.insert(0, (ns.extension[0], xs[0], v))
        else:
            v = sgn * (xs[-1] - xs[-2]) / ns.taus[-1]
            blocks.append((xs[-1], ns.extension[1], v))
    for a, b in ns.zero_margins:
        if b > a:
            blocks.append((a, b, 0.0))
    blocks.sort()
    return blocks


def build_geps(spec: SemigroupSpec, eps: float, box_N: float) -> StepField:
    """Effective piecewise-constant speeds at resolution eps inside the box."""
    spec_t = box_truncate(spec, box_N)
    node_sets = []
    for iv in resolved_intervals(spec_t):
        if iv.hi - iv.lo >= eps and math.isfinite(iv.lo) and math.isfinite(iv.hi):
            node_sets.append(build_nodes(spec_t, eps, iv))
    blocks = []
    for ns in node_sets:
        blocks.extend(_node_blocks(ns))
    blocks.sort()
    breaks = []
    values = [0.0]
    for a, b, v in blocks:
        if breaks and a < breaks[-1] - 1e-12:
            raise CalibrationError("overlapping speed blocks; intervals not disjoint")
        if not breaks or a > breaks[-1] + 0.0:
            breaks.append(a)
            values.append(v)
        else:
            values[-1] = v
        breaks.append(b)
        values.append(0.0)
    return StepField(eps, node_sets, np.array(breaks), np.array(values))


# ---------------------------------------------------------------------------
# calibrated mollification
# ---------------------------------------------------------------------------


@dataclass
class SmoothField:
    """C-infinity field: ramped plateaus times per-segment calibration bumps."""

    eps: float
    moll_width: float
    edges: np.ndarray      # base-region boundaries
    v0: np.ndarray         # plateau value per region
    dv: np.ndarray         # ramp jump per region (0 on plain regions)
    r_lo: np.ndarray       # ramp start per region
    r_w: np.ndarray        # ramp width per region (1 on plain regions)
    seg_bounds: np.ndarray  # calibration segment boundaries
    amp: np.ndarray        # multiplier amplitude per segment slot
    c_lo: np.ndarray
    c_hi: np.ndarray
    c_r: np.ndarray
    calibration_report: list = dc_field(default_factory=list)

    def base(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, x, side="right"),
                      0, len(self.v0) - 1)
        u = (x - self.r_lo[idx]) / self.r_w[idx]
        return self.v0[idx] + self.dv[idx] * smoothstep(u)

    def multiplier(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.seg_bounds, x, side="right") - 1,
                      0, len(self.amp) - 1)
        rise = smoothstep((x - self.c_lo[idx]) / self.c_r[idx])
        fall = smoothstep((self.c_hi[idx] - x) / self.c_r[idx])
        return 1.0 + self.amp[idx] * rise * fall

    def evaluate(self, x):
        return self.base(x) * self.multiplier(x)

    __call__ = evaluate


def _collect_features(step: StepField):
    """Ramp features and calibration segments from the node blocks."""
    w_all = MOLL_FRACTION * step.eps
    ramps = []     # (position lo, width, dv)
    segments = []  # (lo, hi, target tau, chi_lo, chi_hi, chi_r)
    for ns in step.node_sets:
        blocks = [b for b in _node_blocks(ns) if b[2] != 0.0]
        if not blocks:
            continue
        # entry edge: rise from 0 just outside the first block
        first = blocks[0]
        w0 = min(w_all, 0.3 * (first[1] - first[0]))
        ramps.append((first[0] - w0, w0, first[2]))
        for j in range(1, len(blocks)):
            prev = blocks[j - 1]
            cur = blocks[j]
            w = min(w_all, 0.3 * (prev[1] - prev[0]), 0.3 * (cur[1] - cur[0]))
            ramps.append((cur[0] - 0.5 * w, w, cur[2] - prev[2]))
        last = blocks[-1]
        wN = min(w_all, 0.3 * (last[1] - last[0]))
        ramps.append((last[1], wN, -last[2]))
        # calibration segments follow the node pairs (not the entry extension)
        sgn = ns.direction
        for k in range(len(ns.taus)):
            a, b = ns.xs[k], ns.xs[k + 1]
            length = b - a
            w_in = min(w_all, 0.3 * length)
            core_lo = a + 0.55 * w_in
            core_hi = b - 0.55 * w_in
            c_r = max(0.15 * length, 1e-12)
            segments.append((a, b, ns.taus[k], core_lo, core_hi, c_r))
    ramps.sort()
    segments.sort()
    return ramps, segments


def mollify(step: StepField, eps: float | None = None) -> SmoothField:
    """Smooth the step field and calibrate each segment's crossing time.

    The crossing time of a segment is monotone in the multiplicative bump
    amplitude, so a bracketed scalar solve pins each integral to its target
    within 1e-10 relative.
    """
    eps = step.eps if eps is None else eps
    ramps, segments = _collect_features(step)
    edges = [-math.inf]
    v0 = [0.0]
    dv = [0.0]
    r_lo = [0.0]
    r_w = [1.0]
    level = 0.0
    pos = -math.inf
    for lo, w, jump in ramps:
        # plain region up to the ramp, then the ramp region
        edges.append(lo)
        v0.append(level)
        dv.append(jump)
        r_lo.append(lo)
        r_w.append(w)
        edges.append(lo + w)
        level += jump
        v0.append(level)
        dv.append(0.0)
        r_lo.append(lo)
        r_w.append(1.0)
    edges = np.array(edges[1:])
    field = SmoothField(
        eps=eps, moll_width=MOLL_FRACTION * eps,
        edges=edges, v0=np.array(v0), dv=np.array(dv),
        r_lo=np.array(r_lo), r_w=np.array(r_w),
        seg_bounds=np.array([s[0] for s in segments] + [math.inf])
        if segments else np.array([math.inf]),
        amp=np.zeros(max(len(segments), 1)),
        c_lo=np.array([s[3] for s in segments] or [0.0]),
        c_hi=np.array([s[4] for s in segments] or [0.0]),
        c_r=np.array([s[5] for s in segments] or [1.0]),
    )
    gl_x, gl_w = np.polynomial.legendre.leggauss(24)
    for k, (a, b, tau, c_lo, c_hi, c_r) in enumerate(segments):
        # analytic sub-regions: seams, bump ramps, constant plateau
        cuts = np.unique(np.clip(
            np.array([a, c_lo, c_lo + c_r, c_hi - c_r, c_hi, b]), a, b))
        panels = []
        for p_lo, p_hi in zip(cuts, cuts[1:]):
            if p_hi <= p_lo:
                continue
            mid = 0.5 * (p_lo + p_hi)
            half = 0.5 * (p_hi - p_lo)
            panels.append((mid + half * gl_x, half * gl_w,
                           c_lo + c_r <= mid <= c_hi - c_r))
        plateau_pts = np.concatenate([p for p, _, flat in panels if flat] or [np.array([])])
        plateau_wts = np.concatenate([w for _, w, flat in panels if flat] or [np.array([])])
        other_pts = np.concatenate([p for p, _, flat in panels if not flat] or [np.array([])])
        other_wts = np.concatenate([w for _, w, flat in panels if not flat] or [np.array([])])
        base_pl = np.abs(field.base(plateau_pts)) if plateau_pts.size else plateau_pts
        base_other = np.abs(field.base(other_pts)) if other_pts.size else other_pts
        rise = smoothstep((other_pts - c_lo) / c_r) if other_pts.size else other_pts
        fall = smoothstep((c_hi - other_pts) / c_r) if other_pts.size else other_pts
        chi_other = rise * fall

        def crossing(amp):
            total = 0.0
            if plateau_pts.size:
                total += float(np.sum(plateau_wts / (base_pl * (1.0 + amp))))
            if other_pts.size:
                total += float(np.sum(other_wts / (base_other * (1.0 + amp * chi_other))))
            return total - tau

        try:
            lo_a, hi_a = -0.6, 3.0
            if crossing(lo_a) * crossing(hi_a) > 0:
                raise CalibrationError(
                    f"crossing time not bracketed on segment ({a:g}, {b:g})")
            amp = brentq(crossing, lo_a, hi_a, xtol=1e-15, rtol=8.9e-16, maxiter=200)
        except (ValueError, CalibrationError) as exc:
            raise CalibrationError(f"segment ({a:g}, {b:g}): {exc}") from exc
        field.amp[k] = amp
        field.calibration_report.append((a, b, tau, amp))
    return field


def build_smooth_field(spec: SemigroupSpec, eps: float, box_N: float) -> SmoothField:
    return mollify(build_geps(spec, eps, box_N))


# ---------------------------------------------------------------------------
# smooth flow and convergence report
# ---------------------------------------------------------------------------


def smooth_flow_multi(field, x0s, t, rtol: float = 1e-9, atol: float = 1e-11):
    """Adaptive high-order integration, all starting points as one system."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    if ts.size == 0:
        return np.empty((x0s.size, 0))
    horizon = float(ts.max())
    if horizon == 0.0:
        return np.tile(x0s[:, None], (1, ts.size))

    def rhs(_, y):
        return np.asarray(field.evaluate(y), dtype=float)

    t_eval = np.unique(np.concatenate([[0.0], ts]))
    sol = solve_ivp(rhs, (0.0, horizon), x0s, method="DOP853",
                    t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"smooth flow integration failed: {sol.message}")
    return sol.y[:, np.searchsorted(t_eval, ts)]


def smooth_flow(field, x0: float, t, rtol: float = 1e-9, atol: float = 1e-11):
    """High-order adaptive integration of the mollified ODE."""
    out = smooth_flow_multi(field, [x0], t, rtol, atol)[0]
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(out[0])
    return out


@dataclass
class ConvergenceRow:
    eps: float
    x0: float
    sup_error: float
    bound: float
    case: str
    passed: bool


def _start_case(spec: SemigroupSpec, intervals, x0: float, eps: float) -> str:
    for iv in intervals:
        if iv.contains_start(x0) and iv.hi - iv.lo >= eps:
            entry = iv.lo if iv.direction > 0 else iv.hi
            exit_ = iv.hi if iv.direction > 0 else iv.lo
            closed = iv.closed_lo if iv.direction > 0 else iv.closed_hi
            clear_entry = same_point(x0, entry) or abs(x0 - entry) > eps
            if abs(x0 - exit_) > eps and (clear_entry or closed):
                return "moving"
            return "near_boundary"
    return "stationary"


def convergence_report_multi(spec: SemigroupSpec, x0_list, eps_list, box_N: float,
                             n_t: int = 241, t_cap: float | None = None,
                             phi_override: int | None = None) -> list[ConvergenceRow]:
    """sup_t |smooth flow - semigroup| for every (eps, x0), with pass bounds.

    The supremum over all t >= 0 is attained on a finite window: beyond the
    traversal time both flows are clamped or stalled, so the deviation is
    monotone there.  Stationary starting points use the eps-size bound,
    moving ones (M+2) eps.  All starting points integrate as one system.
    """
    spec_t = box_truncate(spec, box_N)
    M = spec.field.bound_M
    if spec_t.is_markov:
        raise ValueError("convergence report needs a deterministic scenario")
    intervals = resolved_intervals(spec_t)
    x0s = list(x0_list)
    if t_cap is None:
        t_cap = 2.0
        for x0 in x0s:
            iv = next((v for v in intervals if v.contains_start(x0)), None)
            if iv is None:
                continue
            end = iv.hi if iv.direction > 0 else iv.lo
            tau = _raw_travel(spec_t, *((x0, end) if iv.direction > 0 else (end, x0)),
                              iv.direction)
            t_cap = max(t_cap, (tau if math.isfinite(tau) else 50.0) + 1.0)
    ts = np.linspace(0.0, t_cap, n_t)
    truth = np.stack([flow_positions(spec_t, x0, ts, phi_override=phi_override)
                      for x0 in x0s])
    rows = []
    for eps in eps_list:
        field = build_smooth_field(spec_t, eps, box_N)
        approx = smooth_flow_multi(field, x0s, ts)
        for i, x0 in enumerate(x0s):
            sup_err = float(np.abs(approx[i] - truth[i]).max())
            case = _start_case(spec_t, intervals, x0, eps)
            bound = eps + 1e-6 if case == "stationary" else (M + 2.0) * eps
            rows.append(ConvergenceRow(eps, x0, sup_err, bound, case,
                                       sup_err <= bound))
    return rows


def convergence_report(spec: SemigroupSpec, x0: float, eps_list, box_N: float,
                       n_t: int = 241, t_cap: float | None = None,
                       phi_override: int | None = None) -> list[ConvergenceRow]:
    return convergence_report_multi(spec, [x0], eps_list, box_N, n_t, t_cap,
                                    phi_override)
