"""Parabolic solves and barrier bracketing for the holding-time pocket.

The distribution function of the noisy dynamics solves an advection-
diffusion equation in non-conservative form (the unknown is the CDF, not
the density).  The scheme is explicit first-order upwind in the advection
term and theta-implicit in diffusion on a graded grid, with the boundary
values pinned to 0 and 1.  Analytic lower/upper barriers built from the
eigenprofiles bracket the solution and both converge to the limiting
exponential-holding kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq
from scipy.special import ndtr

from .diffusion import Case3Schedule, EigenProfile, eigen_profile, upper_profile

__all__ = [
    "PDESolution", "graded_grid", "solve_forward", "fundamental_kernel",
    "holding_kernel", "lower_upper_profiles", "bracket_and_converge",
    "BracketRow",
]


def holding_kernel(lam: float, b: float, t: float, x) -> np.ndarray:
    """Limit CDF: exponential holding at the origin, then speed b to the right."""
    x = np.asarray(x, dtype=float)
    inside = np.exp(-lam * np.maximum(t - x / b, 0.0))
    return np.where(x < 0.0, 0.0, np.where(x >= b * t, 1.0, inside))


# ---------------------------------------------------------------------------
# grids and the scheme
# ---------------------------------------------------------------------------


def graded_grid(x_lo: float, x_hi: float, windows, dx_coarse: float,
                ratio: float = 1.12) -> np.ndarray:
    """Marching grid: per-window local steps, geometric growth outside.

    ``windows`` is a list of (lo, hi, dx) triples; overlapping windows take
    the finest step.  Outside, the step grows from each window's own scale
    with the given ratio, capped at dx_coarse.
    """
    if x_hi <= x_lo:
        raise ValueError("empty domain")
    windows = sorted((lo, hi, dx) for lo, hi, dx in windows if hi > lo)

    def local_dx(x: float) -> float:
        step = dx_coarse
        for lo, hi, dxw in windows:
            if lo <= x < hi:
                step = min(step, dxw)
            else:
                d = min(abs(x - lo), abs(x - hi))
                step = min(step, dxw + d * (ratio - 1.0))
        return step

    edges = sorted(e for lo, hi, _ in windows for e in (lo, hi) if x_lo < e < x_hi)
    xs = [x_lo]
    while xs[-1] < x_hi:
        nxt = xs[-1] + local_dx(xs[-1])
        # land exactly on window edges so scales switch without slivers
        for e in edges:
            if xs[-1] < e < nxt - 1e-12 * max(1.0, abs(e)):
                nxt = e
                break
        xs.append(nxt)
    xs[-1] = x_hi
    if len(xs) > 2 and xs[-1] - xs[-2] < 0.25 * local_dx(xs[-2]):
        del xs[-2]
    return np.array(xs)


@dataclass
class PDESolution:
    xs: np.ndarray
    times: np.ndarray
    values: np.ndarray          # shape (len(times), len(xs))
    dt: float
    sigma: float
    drift_desc: str = ""
    mass_leak: float = 0.0

    def slice_at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        return self.values[k]

    def monotone_defect(self) -> float:
        return float(max(0.0, -np.diff(self.values, axis=1).min()))


def solve_forward(drift_fn, sigma: float, initial_fn, domain: tuple[float, float],
                  T: float, grid: np.ndarray | None = None,
                  dx: float | None = None, dt: float | None = None,
                  theta: float = 0.5, snapshots=None,
                  leak_tol: float = 1e-4, compensate_upwind: bool = True) -> PDESolution:
    """March u_t + g(x) u_x = (sigma^2/2) u_xx with pinned 0/1 boundaries.

    Explicit upwind advection fixes dt by the local CFL ratio; diffusion is
    theta-implicit (theta = 1/2 by default).  First-order upwinding carries
    a modified-equation viscosity |g| h (1 - CFL)/2; drift-dominated layers
    respond exponentially to the diffusion size, so by default that known
    excess is subtracted from the physical coefficient per node (clipped at
    zero).  A boundary drift larger than leak_tol in the final slice
    signals a too-small domain.
    """
    if sigma <= 0:
        raise ValueError("needs sigma > 0")
    if grid is None:
        if dx is None:
            raise ValueError("pass a grid or dx")
        grid = np.arange(domain[0], domain[1] + dx, dx)
    xs = np.asarray(grid, dtype=float)
    n = xs.size
    h = np.diff(xs)
    g = np.asarray(drift_fn(xs), dtype=float)
    D = 0.5 * sigma * sigma
    if dt is None:
        with np.errstate(divide="ignore"):
            h_up = np.where(g[1:-1] > 0, h[:-1], h[1:])
            cfl = h_up / np.maximum(np.abs(g[1:-1]), 1e-12)
        # the diffusion-number cap keeps the half-implicit step oscillation-free
        dt = float(min(0.9 * cfl.min(), 2.0 * h.min() ** 2 / max(D, 1e-300),
                       T / 8.0))
    n_steps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / n_steps

    # interior operators
    hm = h[:-1]
    hp = h[1:]
    lap_m = 2.0 / (hm * (hm + hp))
    lap_p = 2.0 / (hp * (hm + hp))
    lap_c = -(lap_m + lap_p)
    gi = g[1:-1]
    up_m = np.where(gi > 0, -gi / hm, 0.0)        # coefficient of u_{i-1}
    up_c = np.where(gi > 0, gi / hm, -gi / hp)    # coefficient of u_i
    up_p = np.where(gi > 0, 0.0, gi / hp)         # coefficient of u_{i+1}
    if compensate_upwind:
        h_up = np.where(gi > 0, hm, hp)
        courant = np.abs(gi) * dt / np.where(h_up > 0, h_up, 1.0)
        Di = np.maximum(D - 0.5 * np.abs(gi) * h_up * (1.0 - courant), 0.0)
    else:
        Di = np.full(gi.shape, D)

    def banded_matrix(th):
        ab = np.zeros((3, n))
        ab[1, 0] = 1.0
        ab[1, -1] = 1.0
        ab[1, 1:-1] = 1.0 - th * dt * Di * lap_c
        ab[0, 2:] = -th * dt * Di * lap_p
        ab[2, :-2] = -th * dt * Di * lap_m
        ab[0, 1] = 0.0
        ab[2, -2] = 0.0
        return ab

    ab_main = banded_matrix(theta)
    ab_start = banded_matrix(1.0)
    startup = min(4, n_steps) if theta < 1.0 else 0

    u = np.asarray(initial_fn(xs), dtype=float)
    u[0] = 0.0
    u[-1] = 1.0
    snap_times = sorted(set((snapshots or []))) + [T]
    snap_times = sorted(set(min(max(s, 0.0), T) for s in snap_times))
    out_times = []
    out_vals = []
    next_snap = 0
    t_now = 0.0
    if snap_times and snap_times[0] <= 0.0:
        out_times.append(0.0)
        out_vals.append(u.copy())
        next_snap = 1
    for k in range(n_steps):
        th = 1.0 if k < startup else theta
        interior = u[1:-1]
        adv = up_m * u[:-2] + up_c * interior + up_p * u[2:]
        lap = lap_m * u[:-2] + lap_c * interior + lap_p * u[2:]
        rhs = np.empty(n)
        rhs[0] = 0.0
        rhs[-1] = 1.0
        rhs[1:-1] = interior + dt * (-adv + (1.0 - th) * Di * lap)
        u = solve_banded((1, 1), ab_start if k < startup else ab_main, rhs)
        u[0] = 0.0
        u[-1] = 1.0
        t_now = (k + 1) * dt
        while next_snap < len(snap_times) and t_now >= snap_times[next_snap] - 0.5 * dt:
            out_times.append(t_now)
            out_vals.append(u.copy())
            next_snap += 1
    if not out_times or out_times[-1] < T - 0.5 * dt:
        out_times.append(t_now)
        out_vals.append(u.copy())
    leak = max(abs(float(u[1])), abs(1.0 - float(u[-2])))
    sol = PDESolution(xs, np.array(out_times), np.array(out_vals), dt, sigma,
                      mass_leak=leak)
    if leak > leak_tol:
        raise ValueError(f"domain too small: boundary drift {leak:.2e} "
                         f"exceeds {leak_tol:g}")
    return sol


def fundamental_kernel(drift_fn, sigma: float, x0: float, t: float,
                       domain: tuple[float, float], dx: float,
                       w0: float | None = None) -> PDESolution:
    """Time-t kernel CDF from a narrow-Gaussian approximation of a unit mass."""
    width_cap = sigma * math.sqrt(t) / 10.0
    if w0 is None:
        w0 = sigma * math.sqrt(t) / 50.0
    if w0 > width_cap:
        raise ValueError(f"initial width {w0:g} too wide; needs <= {width_cap:g}")

    def initial(xs):
        return ndtr((xs - x0) / w0)

    return solve_forward(drift_fn, sigma, initial, domain, t, dx=dx)


# ---------------------------------------------------------------------------
# barriers
# ---------------------------------------------------------------------------


@dataclass
class PocketBarriers:
    """Analytic lower/upper solutions around the holding pocket."""

    lam: float
    b: float
    schedule: Case3Schedule
    low_profile: EigenProfile
    up_profile: EigenProfile
    kappa: float
    b_up: float    # lower barrier's wave speed, decreasing to b
    b_down: float  # upper barrier's wave speed, increasing to b
    xi: float      # tangency location of the upper barrier
    x_anchor: float
    rate_up: float

    def lower(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sch = self.schedule
        d = sch.delta_n
        front = sch.eps_n + self.b_up * t
        w = self.low_profile.w
        out = np.where(
            x < 0.0, 0.0,
            np.where(x <= sch.eps_n,
                     (1.0 - d) * math.exp(-self.lam * t) * w(np.clip(x, 0.0, sch.eps_n) / sch.eps_n),
                     np.where(x <= front,
                              (1.0 - d) * np.exp(-self.lam * np.maximum(
                                  t - (x - sch.eps_n) / self.b_up, 0.0)),
                              1.0 - d * np.exp(-self.kappa * (x - front)))))
        return out

    def lower_dt(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sch = self.schedule
        front = sch.eps_n + self.b_up * t
        val = self.lower(t, x)
        out = np.where(x <= front, -self.lam * val,
                       -self.kappa * self.b_up * (1.0 - val))
        return np.where(x < 0.0, 0.0, out)

    def upper(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sch = self.schedule
        w = self.up_profile.w
        w1 = float(self.up_profile.w(1.0))
        front = sch.eps_n + self.b_down * t
        decay = math.exp(-self.rate_up * t)
        out = np.where(
            x < self.xi,
            decay * np.exp(self.kappa * (x - self.x_anchor)),
            np.where(x <= sch.eps_n,
                     decay * w(np.clip(x, self.xi, sch.eps_n) / sch.eps_n),
                     np.where(x <= front,
                              w1 * np.exp(-self.rate_up * np.maximum(
                                  t - (x - sch.eps_n) / self.b_down, 0.0)),
                              w1)))
        return out

    def upper_dt(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sch = self.schedule
        front = sch.eps_n + self.b_down * t
        val = self.upper(t, x)
        return np.where(x <= front, -self.rate_up * val, 0.0)


def lower_upper_profiles(lam: float, b: float, schedule: Case3Schedule) -> PocketBarriers:
    """Barriers per the pocket schedule; the upper one is tangent to an
    exponential tail below the pocket, the lower one rides a slightly fast
    wave so its trailing kink stays convex."""
    low = eigen_profile(schedule.s, lam)
    up = upper_profile(schedule.s, lam, schedule.delta_n)
    w_prime0 = float(up.w_prime(0.0))
    kappa = max(2.0 / schedule.sigma_n, 2.0 * w_prime0 / schedule.eps_n,
                schedule.s)
    # tangency of exp(kappa (x - x_anchor)) with w(x / eps) on [-delta, 0]
    target = kappa * schedule.eps_n

    def gap(z):
        return float(up.w_prime(z) / up.w(z)) - target

    z_lo = -schedule.delta_n * (1.0 - 1e-9)
    if gap(z_lo) < 0.0:
        raise ArithmeticError("tangency bracket failed at the pocket floor")
    if gap(0.0) > 0.0:
        raise ArithmeticError("kappa too small for an interior tangency")
    z_star = brentq(gap, z_lo, 0.0, xtol=1e-15, maxiter=200)
    xi = schedule.eps_n * z_star
    x_anchor = xi - math.log(float(up.w(z_star))) / kappa
    b_up = b + 0.75 * schedule.sigma_n ** 2 * kappa  # needs >= sigma^2 kappa / 2
    b_down = b * (1.0 - schedule.sigma_n)
    if b_up - b < 0.5 * schedule.sigma_n ** 2 * kappa:
        raise ArithmeticError("trailing wave speed too slow for convexity")
    return PocketBarriers(lam, b, schedule, low, up, kappa, b_up, b_down,
                          xi, x_anchor, up.rate)


# ---------------------------------------------------------------------------
# bracket-and-converge report
# ---------------------------------------------------------------------------


@dataclass
class BracketRow:
    s: float
    sigma_n: float
    eps_n: float
    bracket_low_defect: float
    bracket_high_defect: float
    tol_grid: float
    l1_distance: float
    bracket_ok: bool


def _pocket_solve(lam: float, a: float, b: float, sch: Case3Schedule, t: float,
                  domain: tuple[float, float], resolution: float = 1.0):
    def drift(xs):
        xs = np.asarray(xs, dtype=float)
        return np.where(xs < 0.0, a, np.where(xs <= sch.eps_n, -sch.eta_n, b))

    dx_fine = min(sch.eps_n / 20.0, sch.sigma_n / 8.0) * resolution
    dx_wall = min(4.0 * dx_fine, sch.sigma_n / 4.0) * resolution
    dx_coarse = min(0.02, sch.sigma_n / 2.5) * resolution
    windows = [(0.0, sch.eps_n, dx_fine),
               (-4.0 * sch.sigma_n, sch.eps_n + 4.0 * sch.sigma_n, dx_wall)]
    grid = graded_grid(domain[0], domain[1], windows, dx_coarse)

    def initial(xs):
        return (np.asarray(xs) >= 0.0).astype(float)

    return solve_forward(drift, sch.sigma_n, initial, domain, t, grid=grid)


def bracket_and_converge(lam: float, a: float, b: float, s_list, t: float,
                         window: tuple[float, float],
                         domain: tuple[float, float] | None = None) -> list[BracketRow]:
    """Check barrier ordering and the shrinking distance to the limit kernel.

    Each pocket size is solved on its own graded grid; the grid tolerance
    is five times a two-grid Richardson estimate of the scheme error, and
    the transport distance to the limiting kernel is reported per run.
    """
    from .diffusion import schedule_case3

    if domain is None:
        domain = (window[0] - 0.75, window[1] + 0.75 + b * t)
    rows = []
    for sch in schedule_case3(lam, s_list):
        sol = _pocket_solve(lam, a, b, sch, t, domain)
        coarse = _pocket_solve(lam, a, b, sch, t, domain, resolution=2.0)
        fine_vals = sol.values[-1]
        coarse_on_fine = np.interp(sol.xs, coarse.xs, coarse.values[-1])
        tol_grid = 5.0 * float(np.max(np.abs(fine_vals - coarse_on_fine)))
        barriers = lower_upper_profiles(lam, b, sch)
        low = barriers.lower(t, sol.xs)
        high = barriers.upper(t, sol.xs)
        low_defect = float(np.max(low - fine_vals))
        high_defect = float(np.max(fine_vals - high))
        mask = (sol.xs >= window[0]) & (sol.xs <= window[1])
        ref = holding_kernel(lam, b, t, sol.xs[mask])
        l1 = float(np.trapezoid(np.abs(fine_vals[mask] - ref), sol.xs[mask]))
        rows.append(BracketRow(sch.s, sch.sigma_n, sch.eps_n,
                               low_defect, high_defect, tol_grid, l1,
                               low_defect <= tol_grid and high_defect <= tol_grid))
    return rows
