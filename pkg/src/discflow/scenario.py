"""Problem data for scalar discontinuous ODEs and their semigroups.

A scenario consists of a bounded regulated speed field with finitely many
breakpoints, an atomless measure supported on the field's zero set, and
three finite point sets: permanent stops, exponential-wait points with
rates, and branch points where both an increasing and a decreasing
trajectory can originate (with a deterministic sign or an upward
probability).  Validation reports every violated structural condition
rather than raising.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import cantor

ATOL = 1e-9  # default absolute tolerance for invariant checks
POINT_TOL = 1e-12


def same_point(a: float, b: float, tol: float = POINT_TOL) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# field
# ---------------------------------------------------------------------------


class Flavor:
    PIECEWISE_CONSTANT = "piecewise_constant"
    GENERAL = "general"


@dataclass(frozen=True, eq=False)
class Piece:
    """Evaluator for one open interval between breakpoints.

    ``left_limit``/``right_limit`` are the one-sided limits of the field at
    the piece's endpoints, taken from inside the piece.  ``inv_speed_integral``
    optionally supplies ``int_a^b dy/|f(y)|`` over subintervals of the piece;
    pieces without it are integrated by adaptive quadrature.  Pieces must be
    single-signed: sign changes belong on breakpoints.
    """

    evaluate: Callable[[float], float]
    left_limit: float
    right_limit: float
    kind: str = "callable"
    params: tuple = ()
    inv_speed_integral: Optional[Callable[[float, float], float]] = None

    @staticmethod
    def constant(value: float) -> "Piece":
        return Piece(lambda x, v=value: v, value, value, kind="const",
                     params=(("value", value),))

    @staticmethod
    def affine(slope: float, intercept: float, lo: float, hi: float) -> "Piece":
        def f(x, m=slope, c=intercept):
            return m * x + c

        if math.isfinite(lo):
            ll = f(lo)
        else:
            ll = intercept if slope == 0 else (-math.inf if slope > 0 else math.inf)
        if math.isfinite(hi):
            rl = f(hi)
        else:
            rl = intercept if slope == 0 else (math.inf if slope > 0 else -math.inf)
        return Piece(f, ll, rl, kind="affine",
                     params=(("slope", slope), ("intercept", intercept)))

    @staticmethod
    def power(center: float, exponent: float, scale: float, lo: float, hi: float,
              cap: float = math.inf) -> "Piece":
        """f(x) = scale * min(|x - center|, cap)**exponent."""

        def f(x, c=center, e=exponent, s=scale, cp=cap):
            return s * min(abs(x - c), cp) ** e

        far = scale * cap ** exponent if math.isfinite(cap) else math.inf * (1 if scale > 0 else -1)
        ll = f(lo) if math.isfinite(lo) else far
        rl = f(hi) if math.isfinite(hi) else far
        return Piece(f, ll, rl, kind="power",
                     params=(("center", center), ("exponent", exponent),
                             ("scale", scale), ("cap", cap)))

    @staticmethod
    def cantor_distance(exponent: float, interval: tuple[float, float] = (0.0, 1.0),
                        cap: float = 1.0) -> "Piece":
        """f(x) = min(dist(x, C), cap)**exponent, C the Cantor set scaled to interval."""
        a, b = interval
        width = b - a
        integrator = cantor.gap_integrator(exponent)

        def f(x):
            return min(cantor.cantor_distance_scaled(x, (a, b)), cap) ** exponent

        def inv_int(lo, hi, w=width, e=exponent):
            # dist scales with the interval width; the cap never binds inside
            u, v = (lo - a) / w, (hi - a) / w
            return w ** (1.0 - e) * integrator.integral(u, v)

        return Piece(f, 0.0, 0.0, kind="cantor_dist",
                     params=(("exponent", exponent), ("interval", (a, b)), ("cap", cap)),
                     inv_speed_integral=inv_int)


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """Bounded regulated field: sorted breakpoints, per-gap pieces, point values."""

    breakpoints: tuple[float, ...]
    pieces: tuple[Piece, ...]
    at_values: tuple[float, ...]
    bound_M: float
    flavor: str = Flavor.GENERAL

    def __post_init__(self):
        if len(self.pieces) != len(self.breakpoints) + 1:
            raise ValueError("need exactly len(breakpoints)+1 pieces")
        if len(self.at_values) != len(self.breakpoints):
            raise ValueError("need one at_value per breakpoint")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if self.bound_M <= 0:
            raise ValueError("bound_M must be positive")

    def piece_index(self, x: float) -> int:
        return bisect.bisect_right(self.breakpoints, x)

    def breakpoint_index(self, x: float) -> Optional[int]:
        for k, b in enumerate(self.breakpoints):
            if same_point(x, b):
                return k
        return None

    def value(self, x: float) -> float:
        k = self.breakpoint_index(x)
        if k is not None:
            return self.at_values[k]
        return self.pieces[self.piece_index(x)].evaluate(x)

    __call__ = value

    def limits(self, x: float) -> tuple[float, float, float]:
        """(f(x-), f(x), f(x+))."""
        k = self.breakpoint_index(x)
        if k is None:
            v = self.value(x)
            return (v, v, v)
        return (self.pieces[k].right_limit, self.at_values[k], self.pieces[k + 1].left_limit)

    def jump_points(self) -> tuple[float, ...]:
        """Discontinuities: unequal one-sided limits, or value off the common limit."""
        out = []
        for b in self.breakpoints:
            fm, f0, fp = self.limits(b)
            if abs(fm - fp) > ATOL or abs(f0 - fm) > ATOL:
                out.append(b)
        return tuple(out)

    def piece_interval(self, i: int) -> tuple[float, float]:
        lo = -math.inf if i == 0 else self.breakpoints[i - 1]
        hi = math.inf if i == len(self.pieces) - 1 else self.breakpoints[i]
        return lo, hi

    def with_extra_breakpoints(self, points: Sequence[float],
                               at_values: Optional[dict] = None) -> "FieldSpec":
        """Insert breakpoints (field values default to the surrounding piece)."""
        at_values = at_values or {}
        cuts = list(self.breakpoints)
        for p in points:
            if self.breakpoint_index(p) is None:
                bisect.insort(cuts, p)
        pieces = []
        ats = []
        for k, c in enumerate(cuts):
            lo = cuts[k - 1] if k else c - 1.0
            pieces.append(self.pieces[self.piece_index(0.5 * (lo + c) if k else c - 0.5)])
            ki = self.breakpoint_index(c)
            if ki is not None:
                ats.append(self.at_values[ki])
            else:
                ats.append(at_values.get(c, self.pieces[self.piece_index(c)].evaluate(c)))
        pieces.append(self.pieces[self.piece_index(cuts[-1] + 0.5)] if cuts else self.pieces[0])
        return FieldSpec(tuple(cuts), tuple(pieces), tuple(ats), self.bound_M, self.flavor)

    @staticmethod
    def piecewise_constant(breakpoints: Sequence[float], values: Sequence[float],
                           at_values: Optional[Sequence[float]] = None,
                           bound_M: Optional[float] = None) -> "FieldSpec":
        """Constant pieces; default point values follow the no-jam rule."""
        breakpoints = tuple(float(b) for b in breakpoints)
        values = tuple(float(v) for v in values)
        if at_values is None:
            # no-jam rule, plus 0 at outward-pointing jumps (branch geometry)
            ats = []
            for k in range(len(breakpoints)):
                fm, fp = values[k], values[k + 1]
                ats.append(0.0 if fm * fp <= 0.0 else fp)
            at_values = tuple(ats)
        else:
            at_values = tuple(float(v) for v in at_values)
        M = bound_M if bound_M is not None else max(
            1e-12, max(abs(v) for v in values + at_values))
        return FieldSpec(breakpoints, tuple(Piece.constant(v) for v in values),
                         at_values, M, Flavor.PIECEWISE_CONSTANT)

    @staticmethod
    def constant(value: float) -> "FieldSpec":
        return FieldSpec((), (Piece.constant(value),), (), max(1e-12, abs(value)),
                         Flavor.PIECEWISE_CONSTANT)


class GraphInterval(NamedTuple):
    """Vertical slice of the completed graph: co{f(x), f(x+), f(x-)}."""

    lo: float
    hi: float


def limits_at(field: FieldSpec, x: float) -> tuple[float, float, float]:
    return field.limits(x)


def multifunction_at(field: FieldSpec, x: float) -> GraphInterval:
    fm, f0, fp = field.limits(x)
    return GraphInterval(min(fm, f0, fp), max(fm, f0, fp))


# ---------------------------------------------------------------------------
# measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AtomlessMeasure:
    """Measure given by a continuous nondecreasing distribution function."""

    kind: str  # "zero" | "cantor" | "table"
    scale: float = 0.0
    interval: tuple[float, float] = (0.0, 1.0)
    xs: tuple[float, ...] = ()
    ys: tuple[float, ...] = ()
    depth: int = cantor.CANTOR_CDF_DEPTH

    @staticmethod
    def zero() -> "AtomlessMeasure":
        return AtomlessMeasure("zero")

    @staticmethod
    def cantor_measure(scale: float = 1.0, interval: tuple[float, float] = (0.0, 1.0),
                       depth: int = cantor.CANTOR_CDF_DEPTH) -> "AtomlessMeasure":
        return AtomlessMeasure("cantor", scale=scale, interval=tuple(interval), depth=depth)

    @staticmethod
    def table(xs: Sequence[float], ys: Sequence[float]) -> "AtomlessMeasure":
        xs = tuple(float(x) for x in xs)
        ys = tuple(float(y) for y in ys)
        if len(xs) != len(ys) or len(xs) < 2:
            raise ValueError("table measure needs matching xs/ys with at least two points")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("table xs must increase")
        if any(b < a - 1e-15 for a, b in zip(ys, ys[1:])):
            raise ValueError("table ys must be nondecreasing")
        return AtomlessMeasure("table", xs=xs, ys=ys)

    def cdf(self, x: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "cantor":
            return cantor.cantor_cdf_scaled(x, self.scale, self.interval, self.depth)
        return float(np.interp(x, self.xs, self.ys))

    def mass(self, a: float, b: float) -> float:
        if b < a:
            raise ValueError("interval endpoints out of order")
        return max(0.0, self.cdf(b) - self.cdf(a))

    def total_mass(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "cantor":
            return self.scale
        return self.ys[-1] - self.ys[0]

    def support_window(self) -> tuple[float, float]:
        if self.kind == "zero":
            return (0.0, 0.0)
        if self.kind == "cantor":
            return self.interval
        return (self.xs[0], self.xs[-1])


def measure_mass(measure: AtomlessMeasure, a: float, b: float) -> float:
    return measure.mass(a, b)


# ---------------------------------------------------------------------------
# semigroup data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SemigroupSpec:
    """Field + measure + (stops, waits, branches): selects one semigroup."""

    field: FieldSpec
    measure: AtomlessMeasure
    stops: tuple[float, ...] = ()
    waits: tuple[tuple[float, float], ...] = ()        # (point, rate)
    branch_phi: tuple[tuple[float, int], ...] = ()      # (point, +-1)
    branch_theta: tuple[tuple[float, float], ...] = ()  # (point, upward prob)

    def __post_init__(self):
        object.__setattr__(self, "stops", tuple(sorted(float(x) for x in self.stops)))
        object.__setattr__(self, "waits", tuple(sorted(self.waits)))
        object.__setattr__(self, "branch_phi", tuple(sorted(self.branch_phi)))
        object.__setattr__(self, "branch_theta", tuple(sorted(self.branch_theta)))

    @property
    def is_markov(self) -> bool:
        return bool(self.waits) or bool(self.branch_theta)

    @property
    def wait_points(self) -> tuple[float, ...]:
        return tuple(x for x, _ in self.waits)

    @property
    def branch_points(self) -> tuple[float, ...]:
        return tuple(sorted([x for x, _ in self.branch_phi]
                            + [x for x, _ in self.branch_theta]))

    def wait_rate(self, x: float) -> Optional[float]:
        for p, lam in self.waits:
            if same_point(p, x):
                return lam
        return None

    def phi(self, x: float) -> Optional[int]:
        for p, s in self.branch_phi:
            if same_point(p, x):
                return s
        return None

    def theta(self, x: float) -> Optional[float]:
        for p, th in self.branch_theta:
            if same_point(p, x):
                return th
        return None

    def in_stops(self, x: float) -> bool:
        return any(same_point(p, x) for p in self.stops)

    def special_points(self) -> tuple[float, ...]:
        """Stops, waits, branches and field jumps, sorted and deduplicated."""
        pts = (list(self.stops) + list(self.wait_points) + list(self.branch_points)
               + list(self.field.jump_points()))
        pts.sort()
        out: list[float] = []
        for p in pts:
            if not out or not same_point(out[-1], p):
                out.append(p)
        return tuple(out)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    location: float
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, location: float, message: str) -> None:
        self.violations.append(Violation(code, location, message))

    def __iter__(self):
        return iter(self.violations)

    def summary(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(f"[{v.code}] at {v.location:g}: {v.message}" for v in self.violations)


def _sample_window(field: FieldSpec, margin: float = 2.0) -> tuple[float, float]:
    if field.breakpoints:
        return field.breakpoints[0] - margin, field.breakpoints[-1] + margin
    return -margin, margin


def _piece_samples(field: FieldSpec, i: int, n: int,
                   window: tuple[float, float]) -> np.ndarray:
    lo, hi = field.piece_interval(i)
    lo = max(lo, window[0])
    hi = min(hi, window[1])
    if hi <= lo:
        return np.empty(0)
    inner = min((hi - lo) * 1e-6, 1e-9)
    return np.linspace(lo + inner, hi - inner, n)


def _limit_consistent(evaluate, endpoint: float, side: int, span: float,
                      stored: float) -> bool:
    """Sampled values must approach the stored limit along shrinking offsets."""
    scale = max(1.0, abs(stored))
    diffs = []
    for h in (1e-4, 1e-7, 1e-10):
        probe = endpoint + side * min(h, span * 0.4)
        diffs.append(abs(evaluate(float(probe)) - stored))
    if diffs[-1] <= 1e-4 * scale:
        return True
    # slow but genuine approach: strictly improving by a decade step
    return diffs[2] < 0.7 * diffs[1] < 0.49 * diffs[0]


def validate(spec: SemigroupSpec, n_samples: int = 257, tol: float = ATOL) -> ValidationReport:
    """Check every structural invariant; violations are data, not errors."""
    report = ValidationReport()
    fld = spec.field
    window = _sample_window(fld)

    # boundedness and stored-limit consistency per piece
    for i, piece in enumerate(fld.pieces):
        xs = _piece_samples(fld, i, n_samples, window)
        if xs.size == 0:
            continue
        vals = np.array([piece.evaluate(float(x)) for x in xs])
        over = np.abs(vals) > fld.bound_M + tol
        if over.any():
            x_bad = float(xs[int(np.argmax(over))])
            report.add("bound", x_bad,
                       f"|f| = {abs(piece.evaluate(x_bad)):g} exceeds M = {fld.bound_M:g}")
        lo, hi = fld.piece_interval(i)
        span = hi - lo if math.isfinite(hi - lo) else 1.0
        if math.isfinite(lo):
            if not _limit_consistent(piece.evaluate, lo, +1, span, piece.left_limit):
                report.add("regulated", lo,
                           f"stored left limit {piece.left_limit:g} not approached")
        if math.isfinite(hi):
            if not _limit_consistent(piece.evaluate, hi, -1, span, piece.right_limit):
                report.add("regulated", hi,
                           f"stored right limit {piece.right_limit:g} not approached")
        if fld.flavor == Flavor.PIECEWISE_CONSTANT and vals.size:
            if (vals.max() - vals.min() > tol
                    or abs(piece.left_limit - vals[0]) > tol
                    or abs(piece.right_limit - vals[-1]) > tol):
                report.add("flavor_constant", float(xs[0]), "piece is not constant")

    for b, v in zip(fld.breakpoints, fld.at_values):
        if abs(v) > fld.bound_M + tol:
            report.add("bound", b, f"|f({b:g})| = {abs(v):g} exceeds M")

    # no-jam: vanishing or opposing one-sided limits force f = 0
    for b in fld.breakpoints:
        fm, f0, fp = fld.limits(b)
        if (abs(fm * fp) <= tol or (fm > tol and fp < -tol)) and abs(f0) > tol:
            report.add("no_jam", b,
                       f"limits ({fm:g}, {fp:g}) force f({b:g}) = 0 but f = {f0:g}")

    _validate_measure(spec, report, n_samples, tol)

    named = [("stops", spec.stops), ("waits", spec.wait_points),
             ("branches", spec.branch_points)]
    for name, pts in named:
        for p in pts:
            if abs(fld.value(p)) > tol:
                report.add("sets_not_zero", p, f"{name} point has f = {fld.value(p):g} != 0")
    for (n1, pts1), (n2, pts2) in [(named[0], named[1]), (named[0], named[2]),
                                   (named[1], named[2])]:
        for p in pts1:
            if any(same_point(p, q) for q in pts2):
                report.add("sets_overlap", p, f"point belongs to both {n1} and {n2}")
    for x, lam in spec.waits:
        if lam <= 0:
            report.add("wait_rate", x, f"rate {lam:g} must be positive")
    for x, s in spec.branch_phi:
        if s not in (-1, 1):
            report.add("branch_value", x, f"phi = {s} not in {{-1, +1}}")
    for x, th in spec.branch_theta:
        if not 0.0 <= th <= 1.0:
            report.add("branch_value", x, f"theta = {th:g} outside [0, 1]")
    if spec.branch_phi and spec.branch_theta:
        report.add("branch_value", spec.branch_phi[0][0],
                   "cannot mix deterministic and probabilistic branch choices")
    for p in spec.branch_points:
        fm, _, fp = fld.limits(p)
        if not (fm < -tol and fp > tol):
            report.add("branch_geometry", p,
                       f"branch point needs f(x-) < 0 < f(x+), got ({fm:g}, {fp:g})")
    return report


def _validate_measure(spec: SemigroupSpec, report: ValidationReport,
                      n_samples: int, tol: float) -> None:
    meas = spec.measure
    if meas.kind == "zero":
        return
    fld = spec.field
    s_lo, s_hi = meas.support_window()
    grid = np.linspace(s_lo - 0.5, s_hi + 0.5, 4 * n_samples)
    cdf_vals = np.array([meas.cdf(float(x)) for x in grid])
    diffs = np.diff(cdf_vals)
    if np.any(diffs < -tol):
        k = int(np.argmax(diffs < -tol))
        report.add("measure_negative", float(grid[k]), "distribution function decreases")
    jump_cap = meas.total_mass() * 0.05 + tol
    if diffs.size and diffs.max() > jump_cap:
        # refinement separates a steep continuous rise from a genuine atom
        k = int(np.argmax(diffs))
        a, b = float(grid[k]), float(grid[k + 1])
        for _ in range(40):
            m = 0.5 * (a + b)
            if meas.cdf(m) - meas.cdf(a) >= meas.cdf(b) - meas.cdf(m):
                b = m
            else:
                a = m
        if meas.mass(a, b) > jump_cap:
            report.add("measure_atom", a, f"mass {meas.mass(a, b):g} concentrates at a point")
    # support inside the zero set: no mass where |f| stays away from 0
    threshold = 0.05 * fld.bound_M

    def flag_if_clear(a: float, b: float, piece) -> bool:
        if meas.mass(a, b) <= tol:
            return False
        # descend to a mass concentration point; the field must vanish there
        aa, bb = a, b
        for _ in range(60):
            m = 0.5 * (aa + bb)
            if meas.mass(aa, m) >= meas.mass(m, bb):
                bb = m
            else:
                aa = m
        x_star = 0.5 * (aa + bb)
        if abs(piece.evaluate(x_star)) > threshold:
            report.add("measure_support", x_star,
                       "measure charges a point where |f| stays away from 0")
            return True
        return False

    for i in range(len(fld.pieces)):
        xs = _piece_samples(fld, i, n_samples, (s_lo - 0.5, s_hi + 0.5))
        if xs.size < 5:
            continue
        piece = fld.pieces[i]
        vals = np.abs(np.array([piece.evaluate(float(x)) for x in xs]))
        step = float(xs[1] - xs[0])
        run_start = None
        for x, v in zip(xs, vals):
            if v > threshold:
                if run_start is None:
                    run_start = float(x)
            else:
                if run_start is not None and x - run_start > 4 * step:
                    if flag_if_clear(run_start + step, float(x) - step, piece):
                        return
                run_start = None
        if run_start is not None and xs[-1] - run_start > 4 * step:
            flag_if_clear(run_start + step, float(xs[-1]) - step, piece)


# ---------------------------------------------------------------------------
# graph distance
# ---------------------------------------------------------------------------


def _graph_cloud(field: FieldSpec, x_lo: float, x_hi: float, step: float) -> np.ndarray:
    """Point cloud on the completed graph, vertical jump segments included."""
    pts = []
    for i in range(len(field.pieces)):
        lo, hi = field.piece_interval(i)
        lo = max(lo, x_lo)
        hi = min(hi, x_hi)
        if hi <= lo:
            continue
        n = max(2, int(math.ceil((hi - lo) / step)) + 1)
        xs = np.linspace(lo, hi, n)
        ys = np.array([field.pieces[i].evaluate(float(x)) for x in xs])
        p_lo, p_hi = field.piece_interval(i)
        if math.isfinite(p_lo) and same_point(lo, p_lo):
            ys[0] = field.pieces[i].left_limit
        if math.isfinite(p_hi) and same_point(hi, p_hi):
            ys[-1] = field.pieces[i].right_limit
        pts.append(np.column_stack([xs, ys]))
    for b in field.breakpoints:
        if not x_lo <= b <= x_hi:
            continue
        gi = multifunction_at(field, b)
        n = max(2, int(math.ceil((gi.hi - gi.lo) / step)) + 1)
        ys = np.linspace(gi.lo, gi.hi, n)
        pts.append(np.column_stack([np.full(n, b), ys]))
    return np.concatenate(pts, axis=0)


def graph_distance(candidate: Callable[[float], float], field: FieldSpec,
                   window_N: float, grid_step: float) -> float:
    """Max over |x| <= N of the distance from (x, candidate(x)) to the graph.

    The graph is discretized at resolution grid_step/4, so the result is an
    upper bound of the true sup-distance within O(grid_step).
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if window_N <= 0:
        raise ValueError("empty window")
    n = int(math.ceil(2 * window_N / grid_step)) + 1
    xs = np.linspace(-window_N, window_N, n)
    cand = np.array([candidate(float(x)) for x in xs])
    reach = window_N + 2 * field.bound_M + 2.0
    cloud = _graph_cloud(field, -reach, reach, grid_step / 4.0)
    tree = cKDTree(cloud)
    dists, _ = tree.query(np.column_stack([xs, cand]), k=1)
    return float(dists.max())


# ---------------------------------------------------------------------------
# scenario simplification
# ---------------------------------------------------------------------------


def box_truncate(spec: SemigroupSpec, box_N: float) -> SemigroupSpec:
    """Zero the field outside [-N, N]; motion there becomes stationary."""
    fld = spec.field
    inner = [b for b in fld.breakpoints if -box_N < b < box_N]
    new_breaks = [-box_N] + inner + [box_N]
    pieces = [Piece.constant(0.0)]
    ats = [0.0]
    for lo, hi in zip(new_breaks, new_breaks[1:]):
        pieces.append(fld.pieces[fld.piece_index(0.5 * (lo + hi))])
        k = fld.breakpoint_index(hi)
        ats.append(fld.at_values[k] if (k is not None and hi < box_N) else 0.0)
    pieces.append(Piece.constant(0.0))
    field2 = FieldSpec(tuple(new_breaks), tuple(pieces), tuple(ats),
                       fld.bound_M, fld.flavor)
    inside = lambda x: -box_N <= x <= box_N
    return SemigroupSpec(field2, spec.measure,
                         tuple(p for p in spec.stops if inside(p)),
                         tuple((x, l) for x, l in spec.waits if inside(x)),
                         tuple((x, s) for x, s in spec.branch_phi if inside(x)),
                         tuple((x, t) for x, t in spec.branch_theta if inside(x)))


def _zero_field_on(fld: FieldSpec, spans: list[tuple[float, float]]) -> FieldSpec:
    """Field equal to 0 on each closed span, unchanged elsewhere."""
    spans = sorted((a, b) for a, b in spans if b > a + POINT_TOL)
    if not spans:
        return fld
    cuts = sorted(set(fld.breakpoints) | {e for s in spans for e in s})

    def zeroed(x):
        return any(a - POINT_TOL <= x <= b + POINT_TOL for a, b in spans)

    pieces = [fld.pieces[0] if not zeroed(cuts[0] - 0.5) else Piece.constant(0.0)]
    for lo, hi in zip(cuts, cuts[1:]):
        m = 0.5 * (lo + hi)
        pieces.append(Piece.constant(0.0) if zeroed(m) else fld.pieces[fld.piece_index(m)])
    pieces.append(Piece.constant(0.0) if zeroed(cuts[-1] + 0.5)
                  else fld.pieces[fld.piece_index(cuts[-1] + 0.5)])
    ats = []
    for c in cuts:
        if zeroed(c):
            ats.append(0.0)
        else:
            k = fld.breakpoint_index(c)
            ats.append(fld.at_values[k] if k is not None else fld.value(c))
    return FieldSpec(tuple(cuts), tuple(pieces), tuple(ats), fld.bound_M, fld.flavor)


def _restrict_measure(measure: AtomlessMeasure,
                      keeps: list[tuple[float, float]]) -> AtomlessMeasure:
    """Measure with increments outside the kept spans removed."""
    if measure.kind == "zero" or not keeps:
        return AtomlessMeasure.zero()
    keeps = sorted((a, b) for a, b in keeps if b > a)
    s_lo, s_hi = measure.support_window()
    if len(keeps) == 1 and keeps[0][0] <= s_lo and keeps[0][1] >= s_hi:
        return measure
    removed = 0.0
    prev_hi = -math.inf
    for a, b in keeps:
        if prev_hi > -math.inf:
            removed += measure.mass(prev_hi, a)
        prev_hi = b
    removed += measure.mass(s_lo - 1.0, keeps[0][0]) if keeps[0][0] > s_lo - 1.0 else 0.0
    removed += measure.mass(keeps[-1][1], s_hi + 1.0) if keeps[-1][1] < s_hi + 1.0 else 0.0
    if removed <= 0.0:
        return measure
    xs = [min(keeps[0][0], s_lo) - 1.0]
    ys = [0.0]
    for a, b in keeps:
        gx = np.linspace(a, b, 2048)
        gy = np.array([measure.cdf(float(x)) for x in gx])
        gy = gy - gy[0] + ys[-1]
        xs.extend(float(x) for x in gx)
        ys.extend(float(y) for y in gy)
    xs.append(xs[-1] + 1.0)
    ys.append(ys[-1])
    out_x, out_y = [xs[0]], [ys[0]]
    for x, y in zip(xs[1:], ys[1:]):
        if x > out_x[-1] + POINT_TOL:
            out_x.append(x)
            out_y.append(max(y, out_y[-1]))
    return AtomlessMeasure.table(out_x, out_y)


def _field_vanishes_on(fld: FieldSpec, a: float, b: float, samples: int = 17) -> bool:
    if b <= a:
        return True
    xs = np.linspace(a + (b - a) * 1e-6, b - (b - a) * 1e-6, samples)
    return all(abs(fld.value(float(x))) <= ATOL for x in xs)


def simplify_spec(spec: SemigroupSpec, eps: float, box_N: float,
                  wait_budget: float | None = None) -> SemigroupSpec:
    """Reduce a scenario to a compactly supported, finitely structured one.

    Truncates to [-N, N]; zeroes monotone intervals shorter than eps (a
    branch point keeps its two flanking intervals while their union exceeds
    eps); stops the motion on end margins of length eps/2 that still carry
    waits or measure mass; restricts measure and waits to the kept cores;
    drops waits with expected duration below ``wait_budget``; relocates a
    wait sharing its point with a branch.  Margins already stopped are left
    alone, which makes the transform idempotent for fixed (eps, N).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    from .flow import classify  # flow builds on scenario; import cycle avoided at module level

    spec = box_truncate(spec, box_N)
    spec = _separate_wait_branch_overlaps(spec, eps)

    intervals = classify(spec)
    incs = list(intervals.increase)
    decs = list(intervals.decrease)
    zero_spans: list[tuple[float, float]] = []
    kept_cores: list[tuple[float, float]] = []
    used = set()

    def margin_active(a: float, b: float) -> bool:
        return (spec.measure.mass(a, b) > ATOL
                or any(a < w < b for w in spec.wait_points))

    def trim_hi(lo: float, hi: float) -> float:
        a = hi - eps / 2.0
        if margin_active(a, hi) and not _field_vanishes_on(spec.field, hi, hi + eps / 2.0):
            zero_spans.append((a, hi))
            return a
        return hi

    def trim_lo(lo: float, hi: float) -> float:
        b = lo + eps / 2.0
        if margin_active(lo, b) and not _field_vanishes_on(spec.field, lo - eps / 2.0, lo):
            zero_spans.append((lo, b))
            return b
        return lo

    for z in spec.branch_points:
        inc = next((iv for iv in incs if same_point(iv.lo, z)), None)
        dec = next((iv for iv in decs if same_point(iv.hi, z)), None)
        if inc is None or dec is None:
            continue
        used.update((id(inc), id(dec)))
        span_lo, span_hi = dec.lo, inc.hi
        if span_hi - span_lo <= eps:
            zero_spans.append((span_lo, span_hi))
            continue
        kept_cores.append((trim_lo(span_lo, z), trim_hi(z, span_hi)))

    for iv in incs:
        if id(iv) in used:
            continue
        if iv.hi - iv.lo < eps:
            zero_spans.append((iv.lo, iv.hi))
            continue
        kept_cores.append((iv.lo, trim_hi(iv.lo, iv.hi)))
    for iv in decs:
        if id(iv) in used:
            continue
        if iv.hi - iv.lo < eps:
            zero_spans.append((iv.lo, iv.hi))
            continue
        kept_cores.append((trim_lo(iv.lo, iv.hi), iv.hi))

    field2 = _zero_field_on(spec.field, zero_spans)
    measure2 = _restrict_measure(spec.measure, kept_cores)

    def in_cores(x):
        return any(a - POINT_TOL <= x <= b + POINT_TOL for a, b in kept_cores)

    waits2 = [(x, lam) for x, lam in spec.waits if in_cores(x)]
    if wait_budget is not None and wait_budget > 0:
        waits2 = [(x, lam) for x, lam in waits2 if 1.0 / lam >= wait_budget]
    return SemigroupSpec(field2, measure2, spec.stops, tuple(waits2),
                         spec.branch_phi, spec.branch_theta)


def _separate_wait_branch_overlaps(spec: SemigroupSpec, eps: float) -> SemigroupSpec:
    branch_pts = spec.branch_points
    plain, moved = [], []
    for x, lam in spec.waits:
        if any(same_point(x, z) for z in branch_pts):
            shift = min(eps, 1.0) / 4.0
            moved.extend([(x - shift, lam), (x + shift, lam)])
        else:
            plain.append((x, lam))
    if not moved:
        return spec
    field2 = spec.field.with_extra_breakpoints([x for x, _ in moved],
                                               {x: 0.0 for x, _ in moved})
    return SemigroupSpec(field2, spec.measure, spec.stops, tuple(plain + moved),
                         spec.branch_phi, spec.branch_theta)


# ---------------------------------------------------------------------------
# JSON scenario files
# ---------------------------------------------------------------------------

_FIELD_KEYS = {"breakpoints", "pieces", "at_values", "bound_M", "flavor"}
_MEASURE_KEYS = {"kind", "scale", "interval", "xs", "ys"}
_TOP_KEYS = {"field", "measure", "stops", "waits", "branches"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)} in {where}")


def _piece_from_json(d: dict, lo: float, hi: float) -> Piece:
    kind = d.get("kind")
    if kind == "const":
        _reject_unknown(d, {"kind", "value"}, "piece")
        return Piece.constant(float(d["value"]))
    if kind == "affine":
        _reject_unknown(d, {"kind", "slope", "intercept"}, "piece")
        return Piece.affine(float(d["slope"]), float(d["intercept"]), lo, hi)
    if kind == "power":
        _reject_unknown(d, {"kind", "center", "exponent", "scale", "cap"}, "piece")
        return Piece.power(float(d["center"]), float(d["exponent"]),
                           float(d.get("scale", 1.0)), lo, hi,
                           float(d.get("cap", math.inf)))
    if kind == "cantor_dist":
        _reject_unknown(d, {"kind", "exponent", "interval", "cap"}, "piece")
        return Piece.cantor_distance(float(d["exponent"]),
                                     tuple(d.get("interval", (0.0, 1.0))),
                                     float(d.get("cap", 1.0)))
    raise ValueError(f"unknown piece kind {kind!r}")


def _piece_to_json(piece: Piece) -> dict:
    if piece.kind == "callable":
        raise ValueError("callable pieces cannot be serialized")
    d = {"kind": piece.kind}
    for k, v in piece.params:
        if k == "cap" and v == math.inf:
            continue
        d[k] = list(v) if isinstance(v, tuple) else v
    return d


def scenario_from_dict(data: dict) -> SemigroupSpec:
    _reject_unknown(data, _TOP_KEYS, "scenario")
    fd = data["field"]
    _reject_unknown(fd, _FIELD_KEYS, "field")
    breaks = tuple(float(b) for b in fd["breakpoints"])
    pieces = []
    for i, pd in enumerate(fd["pieces"]):
        lo = -math.inf if i == 0 else breaks[i - 1]
        hi = math.inf if i == len(fd["pieces"]) - 1 else breaks[i]
        pieces.append(_piece_from_json(pd, lo, hi))
    fld = FieldSpec(breaks, tuple(pieces), tuple(float(v) for v in fd["at_values"]),
                    float(fd["bound_M"]), fd.get("flavor", Flavor.GENERAL))
    md = data.get("measure", {"kind": "zero"})
    _reject_unknown(md, _MEASURE_KEYS, "measure")
    kind = md.get("kind", "zero")
    if kind == "zero":
        meas = AtomlessMeasure.zero()
    elif kind == "cantor":
        meas = AtomlessMeasure.cantor_measure(float(md.get("scale", 1.0)),
                                              tuple(md.get("interval", (0.0, 1.0))))
    elif kind == "table":
        meas = AtomlessMeasure.table(md["xs"], md["ys"])
    else:
        raise ValueError(f"unknown measure kind {kind!r}")
    stops = tuple(float(x) for x in data.get("stops", ()))
    waits = []
    for w in data.get("waits", ()):
        _reject_unknown(w, {"x", "lambda"}, "wait")
        waits.append((float(w["x"]), float(w["lambda"])))
    phi, theta = [], []
    for b in data.get("branches", ()):
        _reject_unknown(b, {"x", "phi", "theta"}, "branch")
        if "phi" in b and "theta" in b:
            raise ValueError("branch cannot carry both phi and theta")
        if "phi" in b:
            phi.append((float(b["x"]), int(b["phi"])))
        elif "theta" in b:
            theta.append((float(b["x"]), float(b["theta"])))
        else:
            raise ValueError("branch needs phi or theta")
    return SemigroupSpec(fld, meas, stops, tuple(waits), tuple(phi), tuple(theta))


def scenario_to_dict(spec: SemigroupSpec) -> dict:
    fld = spec.field
    md: dict = {"kind": spec.measure.kind}
    if spec.measure.kind == "cantor":
        md["scale"] = spec.measure.scale
        md["interval"] = list(spec.measure.interval)
    elif spec.measure.kind == "table":
        md["xs"] = list(spec.measure.xs)
        md["ys"] = list(spec.measure.ys)
    branches = [{"x": x, "phi": s} for x, s in spec.branch_phi]
    branches += [{"x": x, "theta": t} for x, t in spec.branch_theta]
    return {
        "field": {
            "breakpoints": list(fld.breakpoints),
            "pieces": [_piece_to_json(p) for p in fld.pieces],
            "at_values": list(fld.at_values),
            "bound_M": fld.bound_M,
            "flavor": fld.flavor,
        },
        "measure": md,
        "stops": list(spec.stops),
        "waits": [{"x": x, "lambda": lam} for x, lam in spec.waits],
        "branches": branches,
    }


def load_scenario(path: str) -> SemigroupSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(spec: SemigroupSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(spec), fh, indent=2)
        fh.write("\n")
