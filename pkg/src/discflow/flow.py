"""Deterministic flow: interval classification and travel-time inversion.

Trajectories move monotonically inside maximal intervals where the
reciprocal speed (plus the singular waiting mass) is locally integrable,
and the flow is evaluated by inverting the implicit identity

    t = int_{x0}^{x(t)} dy / speed(y)  +  mass([x0, x(t)]).

Piecewise-constant scenarios are walked segment by segment in closed form;
general pieces are integrated by adaptive quadrature (or a piece-supplied
integral) and inverted by monotone bisection.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .scenario import ATOL, Flavor, POINT_TOL, SemigroupSpec, same_point

DIVERGENCE_CAP = 1e9
_SIGN_TOL = 1e-11


@dataclass(frozen=True)
class MonotoneInterval:
    lo: float
    hi: float
    direction: int      # +1 increasing, -1 decreasing
    closed_lo: bool = False   # increase: trajectories may start at lo
    closed_hi: bool = False   # decrease: trajectories may start at hi

    def contains_start(self, x: float) -> bool:
        if self.lo < x < self.hi:
            return True
        if self.direction > 0 and self.closed_lo and same_point(x, self.lo):
            return True
        if self.direction < 0 and self.closed_hi and same_point(x, self.hi):
            return True
        return False


@dataclass
class MonotoneIntervals:
    increase: list[MonotoneInterval]
    decrease: list[MonotoneInterval]

    def at(self, x: float) -> tuple[MonotoneInterval | None, MonotoneInterval | None]:
        inc = next((iv for iv in self.increase if iv.contains_start(x)), None)
        dec = next((iv for iv in self.decrease if iv.contains_start(x)), None)
        return inc, dec

    def is_stationary(self, x: float) -> bool:
        inc, dec = self.at(x)
        return inc is None and dec is None


@dataclass(frozen=True)
class FlowResult:
    position: float
    clamped: bool
    branch_used: int | None = None


# ---------------------------------------------------------------------------
# reciprocal-speed integration
# ---------------------------------------------------------------------------


def _segment_speed_time(spec: SemigroupSpec, lo: float, hi: float, direction: int) -> float:
    """``int_lo^hi dy/g`` with g the directional speed, split at breakpoints."""
    if hi <= lo:
        return 0.0
    fld = spec.field
    total = 0.0
    cuts = [lo] + [b for b in fld.breakpoints if lo < b < hi] + [hi]
    for a, b in zip(cuts, cuts[1:]):
        piece = fld.pieces[fld.piece_index(0.5 * (a + b))]
        if piece.kind == "const":
            v = piece.evaluate(a) * direction
            if v <= _SIGN_TOL:
                return math.inf
            total += (b - a) / v
        elif piece.inv_speed_integral is not None:
            probe = piece.evaluate(0.5 * (a + b)) * direction
            if probe < -_SIGN_TOL:
                return math.inf
            total += piece.inv_speed_integral(a, b)
        else:
            total += _quad_inv_speed(piece.evaluate, a, b, direction)
        if total > DIVERGENCE_CAP:
            return math.inf
    return total


def _quad_inv_speed(f, a: float, b: float, direction: int) -> float:
    def integrand(x):
        g = f(x) * direction
        if g <= 0.0:
            return DIVERGENCE_CAP
        return min(1.0 / g, DIVERGENCE_CAP)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val, err = quad(integrand, a, b, limit=200, epsabs=1e-12, epsrel=1e-10)
    if not math.isfinite(val) or val > DIVERGENCE_CAP or val >= 0.5 * DIVERGENCE_CAP * (b - a):
        return math.inf
    if err > max(1e-6, 0.05 * abs(val)):
        # refine away from the (endpoint) singularities before giving up
        val = _refined_inv_speed(f, a, b, direction)
    return val


def _refined_inv_speed(f, a: float, b: float, direction: int) -> float:
    span = b - a
    total = None
    prev = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(4, 44):
            h = span * 0.5 ** k
            val = quad(lambda x: 1.0 / max(f(x) * direction, 1e-300),
                       a + h, b - h, limit=200, epsabs=1e-12, epsrel=1e-9)[0]
            if val > DIVERGENCE_CAP:
                return math.inf
            if prev is not None and abs(val - prev) < 1e-10 * max(1.0, abs(val)):
                total = val
                break
            prev = val
    return total if total is not None else (prev if prev is not None else math.inf)


def one_sided_time(spec: SemigroupSpec, point: float, side: str, span: float,
                   direction: int) -> float:
    """Approach time integral over [point, point+span] or [point-span, point]."""
    if side == "right":
        return _segment_speed_time(spec, point, point + span, direction)
    return _segment_speed_time(spec, point - span, point, direction)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

_CLASSIFY_CACHE: dict[int, tuple[SemigroupSpec, MonotoneIntervals]] = {}


def _cell_sign(spec: SemigroupSpec, lo: float, hi: float) -> int:
    """+1, -1, or 0 for a cell inside a single piece; raises on a sign change."""
    fld = spec.field
    a = max(lo, hi - 64.0) if not math.isfinite(lo) else lo
    b = min(hi, lo + 64.0) if not math.isfinite(hi) else hi
    if not math.isfinite(a):
        a, b = -32.0, min(b, 32.0)
    piece = fld.pieces[fld.piece_index(0.5 * (a + b))]
    if piece.kind == "const":
        v = piece.evaluate(0.5 * (a + b))
        return 0 if abs(v) <= _SIGN_TOL else (1 if v > 0 else -1)
    xs = np.linspace(a + (b - a) * 1e-9, b - (b - a) * 1e-9, 9)
    vals = [piece.evaluate(float(x)) for x in xs]
    has_pos = any(v > _SIGN_TOL for v in vals)
    has_neg = any(v < -_SIGN_TOL for v in vals)
    if has_pos and has_neg:
        raise ValueError(
            f"field changes sign inside ({lo:g}, {hi:g}); add a breakpoint at the crossing")
    if has_pos:
        return 1
    if has_neg:
        return -1
    return 0


def _merge_cells(spec: SemigroupSpec, cells: list[tuple[float, float]],
                 signs: list[int], direction: int) -> list[tuple[float, float]]:
    """Join adjacent directional cells when the shared point is traversable."""
    fld = spec.field
    runs: list[tuple[float, float]] = []
    current: tuple[float, float] | None = None
    for (lo, hi), s in zip(cells, signs):
        if s != direction:
            if current is not None:
                runs.append(current)
            current = None
            continue
        if current is None:
            current = (lo, hi)
            continue
        y = current[1]
        joinable = not spec.in_stops(y)
        if joinable:
            fm, _, fp = fld.limits(y)
            span = min(1.0, (y - current[0]) / 2, (hi - y) / 2)
            if direction > 0:
                left_ok = fm > _SIGN_TOL or math.isfinite(
                    one_sided_time(spec, y, "left", span, direction))
                right_ok = fp > _SIGN_TOL or math.isfinite(
                    one_sided_time(spec, y, "right", span, direction))
            else:
                left_ok = fm < -_SIGN_TOL or math.isfinite(
                    one_sided_time(spec, y, "left", span, direction))
                right_ok = fp < -_SIGN_TOL or math.isfinite(
                    one_sided_time(spec, y, "right", span, direction))
            joinable = left_ok and right_ok
        if joinable:
            current = (current[0], hi)
        else:
            runs.append(current)
            current = (lo, hi)
    if current is not None:
        runs.append(current)
    return runs


def classify(spec: SemigroupSpec) -> MonotoneIntervals:
    """Maximal intervals of increase and decrease with endpoint inclusion."""
    cached = _CLASSIFY_CACHE.get(id(spec))
    if cached is not None and cached[0] is spec:
        return cached[1]
    fld = spec.field
    pts = sorted(set(fld.breakpoints) | set(spec.stops))
    cells = []
    if pts:
        cells.append((-math.inf, pts[0]))
        cells.extend(zip(pts, pts[1:]))
        cells.append((pts[-1], math.inf))
    else:
        cells.append((-math.inf, math.inf))
    signs = [_cell_sign(spec, lo, hi) for lo, hi in cells]

    increase = []
    for lo, hi in _merge_cells(spec, cells, signs, +1):
        closed_lo = False
        if math.isfinite(lo) and not spec.in_stops(lo):
            span = min(1.0, (hi - lo) / 2)
            closed_lo = math.isfinite(one_sided_time(spec, lo, "right", span, +1))
        increase.append(MonotoneInterval(lo, hi, +1, closed_lo=closed_lo))
    decrease = []
    for lo, hi in _merge_cells(spec, cells, signs, -1):
        closed_hi = False
        if math.isfinite(hi) and not spec.in_stops(hi):
            span = min(1.0, (hi - lo) / 2)
            closed_hi = math.isfinite(one_sided_time(spec, hi, "left", span, -1))
        decrease.append(MonotoneInterval(lo, hi, -1, closed_hi=closed_hi))
    result = MonotoneIntervals(increase, decrease)
    if len(_CLASSIFY_CACHE) > 512:
        _CLASSIFY_CACHE.clear()
    _CLASSIFY_CACHE[id(spec)] = (spec, result)
    return result


# ---------------------------------------------------------------------------
# travel time and flow
# ---------------------------------------------------------------------------


def travel_time(spec: SemigroupSpec, a: float, b: float, direction: int | str = +1) -> float:
    """Traversal time of [min(a,b), max(a,b)] in the given direction.

    Returns +inf when the reciprocal-speed integral diverges.  The segment
    must lie inside (the closure of) one monotone interval.
    """
    direction = {"up": 1, "down": -1}.get(direction, direction)
    lo, hi = (a, b) if a <= b else (b, a)
    if lo == hi:
        return 0.0
    ivs = classify(spec)
    pool = ivs.increase if direction > 0 else ivs.decrease
    home = next((iv for iv in pool
                 if iv.lo - POINT_TOL <= lo and hi <= iv.hi + POINT_TOL), None)
    if home is None:
        raise ValueError(f"[{lo:g}, {hi:g}] is not inside a single monotone interval")
    return _segment_speed_time(spec, lo, hi, direction) + spec.measure.mass(lo, hi)


def _raw_travel(spec: SemigroupSpec, lo: float, hi: float, direction: int) -> float:
    if hi <= lo:
        return 0.0
    return _segment_speed_time(spec, lo, hi, direction) + spec.measure.mass(lo, hi)


def _advance_in_interval(spec: SemigroupSpec, iv: MonotoneInterval, x0: float,
                         t: float) -> tuple[float, bool]:
    """Position after time t moving inside iv from x0; returns (x, clamped)."""
    direction = iv.direction
    fld = spec.field
    if t <= 0.0:
        return x0, False
    end = iv.hi if direction > 0 else iv.lo
    # node walk: segment ends are breakpoints, then the interval end
    if direction > 0:
        nodes = [b for b in fld.breakpoints if x0 < b < iv.hi]
    else:
        nodes = [b for b in fld.breakpoints if iv.lo < b < x0]
        nodes.reverse()
    if math.isfinite(end):
        nodes.append(end)
    x = x0
    remaining = t
    for nxt in nodes:
        seg_lo, seg_hi = (x, nxt) if direction > 0 else (nxt, x)
        tau = _raw_travel(spec, seg_lo, seg_hi, direction)
        if tau > remaining:
            return _invert_in_segment(spec, x, nxt, remaining, direction), False
        remaining -= tau
        x = nxt
    if math.isfinite(end):
        return end, True
    # unbounded tail: one piece all the way out; speed bound brackets the move
    bracket = x + direction * (spec.field.bound_M * remaining + 1.0)
    return _invert_in_segment(spec, x, bracket, remaining, direction), False


def _invert_in_segment(spec: SemigroupSpec, x: float, limit: float, dt: float,
                       direction: int) -> float:
    """Solve travel(x -> pos) = dt for pos between x and limit (exclusive)."""
    if dt <= 0.0:
        return x
    seg_lo, seg_hi = (x, limit) if direction > 0 else (limit, x)
    piece = spec.field.pieces[spec.field.piece_index(0.5 * (seg_lo + seg_hi))]
    if piece.kind == "const" and spec.measure.mass(seg_lo, seg_hi) == 0.0:
        v = piece.evaluate(0.5 * (seg_lo + seg_hi)) * direction
        if v <= 0.0:
            return x
        return x + direction * v * dt
    lo_pos, hi_pos = x, limit
    for _ in range(200):
        mid = 0.5 * (lo_pos + hi_pos)
        seg = (x, mid) if direction > 0 else (mid, x)
        tau = _raw_travel(spec, seg[0], seg[1], direction)
        if tau < dt:
            lo_pos = mid
        else:
            hi_pos = mid
        if abs(hi_pos - lo_pos) < 1e-13 * max(1.0, abs(hi_pos)):
            break
    return 0.5 * (lo_pos + hi_pos)


def pick_interval(spec: SemigroupSpec, x0: float,
                  phi_override: int | None = None) -> MonotoneInterval | None:
    """Interval the deterministic dynamics follows from x0 (branch resolved)."""
    inc, dec = classify(spec).at(x0)
    if inc is not None and dec is not None:
        phi = phi_override if phi_override is not None else spec.phi(x0)
        if phi is None:
            raise ValueError(f"start {x0:g} admits both directions; no branch sign given")
        return inc if phi > 0 else dec
    return inc if inc is not None else dec


def flow(spec: SemigroupSpec, x0: float, t: float,
         phi_override: int | None = None, _allow_markov: bool = False) -> FlowResult:
    """Deterministic semigroup evaluation x0 -> x(t)."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if spec.is_markov and not _allow_markov:
        raise ValueError("scenario has random ingredients; use the path sampler")
    iv = pick_interval(spec, x0, phi_override)
    if iv is None:
        return FlowResult(x0, False, None)
    branch = None
    inc, dec = classify(spec).at(x0)
    if inc is not None and dec is not None:
        branch = iv.direction
    pos, clamped = _advance_in_interval(spec, iv, x0, t)
    return FlowResult(pos, clamped, branch)


def flow_positions(spec: SemigroupSpec, x0: float, ts: np.ndarray,
                   phi_override: int | None = None,
                   _allow_markov: bool = False) -> np.ndarray:
    """Vectorized trajectory sweep over sorted times."""
    ts = np.asarray(ts, dtype=float)
    if np.any(np.diff(ts) < 0):
        raise ValueError("times must be sorted")
    if spec.is_markov and not _allow_markov:
        raise ValueError("scenario has random ingredients; use the path sampler")
    iv = pick_interval(spec, x0, phi_override)
    out = np.empty(ts.shape)
    if iv is None:
        out.fill(x0)
        return out
    x = x0
    t_cur = 0.0
    done_at: float | None = None
    for k, t in enumerate(ts):
        if done_at is not None:
            out[k] = done_at
            continue
        x_new, clamped = _advance_in_interval(spec, iv, x, float(t) - t_cur)
        out[k] = x_new
        x, t_cur = x_new, float(t)
        if clamped:
            done_at = x_new
    return out


def semigroup_property_check(spec: SemigroupSpec, x0: float, s: float, t: float,
                             tol: float = 1e-8, phi_override: int | None = None) -> bool:
    """|S_t(S_s(x0)) - S_{s+t}(x0)| <= tol."""
    mid = flow(spec, x0, s, phi_override)
    two_step = flow(spec, mid.position, t, phi_override)
    one_step = flow(spec, x0, s + t, phi_override)
    return abs(two_step.position - one_step.position) <= tol


def reach_time(spec: SemigroupSpec, iv: MonotoneInterval, x0: float, target: float) -> float:
    """Time for the deterministic motion to reach target from x0 inside iv."""
    if iv.direction > 0:
        return _raw_travel(spec, x0, target, +1)
    return _raw_travel(spec, target, x0, -1)
