"""Vanishing-noise diffusion schemes for the canonical jump dynamics.

Five cases around a single jump sitting at the origin: STOP (zero plateau
that traps paths as the noise vanishes), BRANCH (jump placed so the exit
sides split with a prescribed probability), WAIT (a backward-drift pocket
whose holding time converges to an exponential law), and the trivial PASS
and TRAP cases that keep the field itself.  Closed-form two-sided exit
statistics on [-1, 1] back the calibrations; the Monte Carlo side runs on
the batch kernels with bridge-corrected barrier detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .kernels import sde_exit_batch
from .rng import stream_keys

CASES = ("stop", "branch", "wait", "pass", "trap")


@dataclass(frozen=True)
class DiffusionScheme:
    """Piecewise-constant drift, its mollification width, and the noise size."""

    case: str
    sigma: float
    breaks: np.ndarray
    values: np.ndarray
    delta: float
    params: dict = dc_field(default_factory=dict)

    def drift(self, x):
        from .kernels import drift_eval_array

        return drift_eval_array(np.asarray(x, dtype=float), self.breaks,
                                self.values, self.delta)

    @property
    def drift_bound(self) -> float:
        return float(np.abs(self.values).max())

    def max_dt(self) -> float:
        """Step-size acceptance bound (drift displacement per step market)."""
        M = self.drift_bound
        if M == 0.0:
            return math.inf
        return (self.sigma / (10.0 * M)) ** 2


def build_scheme(case: str, params: dict, sigma_n: float,
                 delta: float | None = None) -> DiffusionScheme:
    """Drift layout per case; see the module docstring for the roles."""
    if sigma_n <= 0:
        raise ValueError("noise size must be positive")
    case = case.lower()
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}")
    a = params.get("a")
    b = params.get("b")
    if delta is None:
        delta = sigma_n / 20.0
    if case == "stop":
        if not (a > 0 and b > 0):
            raise ValueError("stop case needs a, b > 0")
        root = math.sqrt(sigma_n)
        breaks = np.array([-root, root])
        values = np.array([a, 0.0, b])
    elif case == "branch":
        theta = params.get("theta")
        if not (a < 0 < b):
            raise ValueError("branch case needs a < 0 < b")
        if not 0.0 <= theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if theta in (0.0, 1.0):
            zeta = -math.copysign(math.sqrt(sigma_n) / 3.0, 2.0 * theta - 1.0)
            flagged = True
        else:
            zeta = select_zeta(theta, a, b, sigma_n)
            flagged = False
        xi = math.sqrt(sigma_n) * zeta
        breaks = np.array([xi])
        values = np.array([a, b])
        # the exit choice is decided inside a sigma^(3/2)-thick layer around
        # the jump; the smoothing must stay well below that scale
        delta_b = min(delta, sigma_n ** 1.5 / 50.0)
        return DiffusionScheme(case, sigma_n, breaks, values, delta_b,
                               {"a": a, "b": b, "theta": theta, "zeta": zeta,
                                "xi": xi, "boundary_theta": flagged})
    elif case == "wait":
        lam = params.get("lambda")
        eps_n = params.get("eps_n")
        eta_n = params.get("eta_n")
        if not (a > 0 and b > 0):
            raise ValueError("wait case needs a, b > 0")
        if not (0.0 < eps_n < sigma_n < eta_n):
            raise ValueError("wait case needs eps_n < sigma_n < eta_n")
        breaks = np.array([0.0, eps_n])
        values = np.array([a, -eta_n, b])
        return DiffusionScheme(case, sigma_n, breaks, values,
                               min(delta, eps_n / 10.0),
                               {"a": a, "b": b, "lambda": lam,
                                "eps_n": eps_n, "eta_n": eta_n})
    else:  # pass / trap: keep the field
        if case == "pass" and not (a > 0 and b > 0):
            raise ValueError("pass case needs a, b > 0")
        if case == "trap" and not (b < 0 < a):
            raise ValueError("trap case needs b < 0 < a")
        breaks = np.array([0.0])
        values = np.array([a, b])
    return DiffusionScheme(case, sigma_n, breaks, values, delta,
                           dict(params))


# ---------------------------------------------------------------------------
# closed-form exit statistics on [-1, 1]
# ---------------------------------------------------------------------------


@dataclass
class ExitStats:
    """Rescaled two-sided exit problem: drift a/sqrt(s) | b/sqrt(s), noise sqrt(s)."""

    a: float
    b: float
    sigma_n: float
    a_n: float
    b_n: float
    c1: float
    c2: float
    denom: float

    def mean_exit_point(self, y) -> np.ndarray:
        """u(y) = E[exit point] on [-1, 1]; strictly increasing, u(+-1) = +-1."""
        y = np.asarray(y, dtype=float)
        left = -1.0 + 2.0 * self.b * (np.exp(self.a_n) - np.exp(-self.a_n * y)) / self.denom
        right = 1.0 + 2.0 * self.a * (np.exp(-self.b_n) - np.exp(-self.b_n * y)) / self.denom
        return np.where(y <= 0.0, left, right)

    def mean_exit_time(self, y) -> np.ndarray:
        """v(y) = E[exit time]; vanishes at both ends."""
        y = np.asarray(y, dtype=float)
        sq = math.sqrt(self.sigma_n)
        left = (-(y + 1.0) * sq / self.a
                + self.c1 * (np.exp(-self.a_n * y) - np.exp(self.a_n)))
        right = ((1.0 - y) * sq / self.b
                 + self.c2 * (np.exp(-self.b_n * y) - np.exp(-self.b_n)))
        return np.where(y <= 0.0, left, right)

    def right_exit_probability(self, y) -> np.ndarray:
        return 0.5 * (1.0 + self.mean_exit_point(y))


def exit_stats(a: float, b: float, sigma_n: float) -> ExitStats:
    """Exit point and exit time of the rescaled two-sided problem.

    The exit-point profile is explicit; the exit-time constants come from
    matching value and slope of the two branches at the jump, then the
    boundary conditions pin everything.
    """
    if not (a < 0 < b):
        raise ValueError("needs a < 0 < b")
    if sigma_n <= 0:
        raise ValueError("noise size must be positive")
    s32 = sigma_n ** 1.5
    a_n = 2.0 * a / s32
    b_n = 2.0 * b / s32
    denom = b * (math.exp(a_n) - 1.0) + a * (1.0 - math.exp(-b_n))
    sq = math.sqrt(sigma_n)
    # value and slope matching at 0 for the exit-time branches
    A = np.array([[1.0 - math.exp(a_n), -(1.0 - math.exp(-b_n))],
                  [-a_n, b_n]])
    rhs = np.array([sq / b + sq / a, sq / a - sq / b])
    c1, c2 = np.linalg.solve(A, rhs)
    return ExitStats(a, b, sigma_n, a_n, b_n, float(c1), float(c2), denom)


def select_zeta(theta: float, a: float, b: float, sigma_n: float) -> float:
    """Jump offset (in rescaled units) giving right-exit probability theta.

    A start at the origin sees the jump at zeta, i.e. sits at -zeta in
    jump-centred coordinates, so we solve u(-zeta) = 2 theta - 1.  Positive
    theta - 1/2 pushes the jump below the start.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must be strictly between 0 and 1")
    stats = exit_stats(a, b, sigma_n)
    target = 2.0 * theta - 1.0

    def g(z):
        return float(stats.mean_exit_point(-z)) - target

    lo, hi = -1.0, 1.0
    if g(lo) * g(hi) > 0:
        raise ArithmeticError("exit-point profile does not bracket the target")
    zeta = brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=300)
    return float(zeta)


# ---------------------------------------------------------------------------
# eigenprofiles for the holding-time pocket
# ---------------------------------------------------------------------------


@dataclass
class EigenProfile:
    """Increasing solution of (sig2/2) w'' + eta w' = -rate w, normalized.

    The two exponents r_plus > r_minus are stored directly: the naive form
    gamma +- s loses all precision for s beyond ~12 because gamma + s is an
    exponentially small difference of order-s quantities.
    """

    s: float
    lam: float
    sigma2: float
    eta: float
    gamma: float
    s_eff: float
    r_plus: float
    r_minus: float
    rate: float
    shift: float  # domain is [-shift, 1]
    delta: float | None = None

    def _denom(self) -> float:
        d = self.shift if self.shift > 0 else 1.0
        return math.exp(self.r_plus * d) - math.exp(self.r_minus * d)

    def w(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float) + (self.shift if self.shift > 0 else 0.0)
        return (np.exp(self.r_plus * y) - np.exp(self.r_minus * y)) / self._denom()

    def w_prime(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float) + (self.shift if self.shift > 0 else 0.0)
        return (self.r_plus * np.exp(self.r_plus * y)
                - self.r_minus * np.exp(self.r_minus * y)) / self._denom()

    def w_second(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float) + (self.shift if self.shift > 0 else 0.0)
        return (self.r_plus ** 2 * np.exp(self.r_plus * y)
                - self.r_minus ** 2 * np.exp(self.r_minus * y)) / self._denom()

    def residual(self, y, normalized: bool = True) -> np.ndarray:
        """|sig2/2 w'' + eta w' + rate w|, optionally scale-normalized.

        The three terms reach ~1e13 for s around 16, so the raw residual
        cannot beat double-precision cancellation; the normalized form
        divides by the largest term magnitude.
        """
        t1 = 0.5 * self.sigma2 * self.w_second(y)
        t2 = self.eta * self.w_prime(y)
        t3 = self.rate * self.w(y)
        res = np.abs(t1 + t2 + t3)
        if not normalized:
            return res
        scale = np.maximum(np.maximum(np.abs(t1), np.abs(t2)),
                           np.maximum(np.abs(t3), 1.0))
        return res / scale


def base_constants(s: float, lam: float) -> tuple[float, float, float]:
    """(sigma2, eta, gamma) making the unit-interval decay rate equal lam."""
    if s <= 0 or lam <= 0:
        raise ValueError("s and lam must be positive")
    sigma2 = 2.0 * lam * math.sinh(s) ** 2 / s ** 2
    coth = math.cosh(s) / math.sinh(s)
    eta = s * coth * sigma2
    gamma = -s * coth
    return sigma2, eta, gamma


def eigen_profile(s: float, lam: float) -> EigenProfile:
    """Increasing eigenfunction w with w(0) = 0, w'(1) = 0, w(1) = 1."""
    if s < 1:
        raise ValueError("s must be at least 1")
    sigma2, eta, gamma = base_constants(s, lam)
    r_plus = -2.0 * s / math.expm1(2.0 * s)
    return EigenProfile(s, lam, sigma2, eta, gamma, s_eff=s,
                        r_plus=r_plus, r_minus=r_plus - 2.0 * s,
                        rate=lam, shift=0.0)


def upper_profile(s: float, lam: float, delta: float) -> EigenProfile:
    """Widened profile on [-delta, 1]: w(-delta) = 0, w(0) = 1, increasing.

    The widened exponent solves q coth(q (1 + 2 delta)) = -gamma, which
    parks the profile's critical point at 1 + delta, hence w'(1) > 0.  Its
    decay rate sig2 r_plus r_minus / 2 is exponentially small in s delta.
    The quantitative envelope bounds hold for delta <= 1/2; the profile is
    well defined for any delta < 1.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if s < 1:
        raise ValueError("s must be at least 1")
    sigma2, eta, gamma = base_constants(s, lam)
    length = 1.0 + 2.0 * delta

    def g(q):
        return q * math.cosh(q * length) / math.sinh(q * length) + gamma

    lo, hi = s, 2.0 * s + 2.0
    if g(lo) * g(hi) > 0:
        raise ArithmeticError(
            f"no widened exponent in [{lo:g}, {hi:g}]; profile bracket failed")
    s_delta = brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=300)
    r_plus = -2.0 * s_delta / math.expm1(2.0 * s_delta * length)
    r_minus = r_plus - 2.0 * s_delta
    lam_delta = 0.5 * sigma2 * r_plus * r_minus
    return EigenProfile(s, lam, sigma2, eta, gamma, s_eff=float(s_delta),
                        r_plus=r_plus, r_minus=r_minus,
                        rate=float(lam_delta), shift=delta, delta=delta)


@dataclass(frozen=True)
class Case3Schedule:
    s: float
    sigma_tilde: float
    eta_tilde: float
    delta_n: float
    eps_n: float
    sigma_n: float
    eta_n: float


def schedule_case3(lam: float, s_list, damping: int = 3) -> list[Case3Schedule]:
    """Pocket schedules: rescaled constants from the eigen relation, then
    eps_n = 1/(n**damping eta_tilde), so eps_n << sigma_n << eta_n and all
    three vanish along the sequence.

    The index damping must outrun the pocket's boundary-layer stretch: the
    walls sit one diffusion length sigma_n^2/(2 speed) outside the pocket,
    which multiplies the holding rate by about exp(-s eps_n sigma_tilde^2
    (1/a + 1/b)).  With linear damping that factor converges to a constant
    e^(-2/n) != 1; the cubic default sends it to one.
    """
    out = []
    for idx, s in enumerate(s_list, start=1):
        if s < 1:
            raise ValueError("schedule entries need s >= 1")
        sigma2, eta, _ = base_constants(s, lam)
        sigma_t = math.sqrt(sigma2)
        eps_n = 1.0 / (idx ** damping * eta)
        sigma_n = eps_n * sigma_t
        eta_n = eps_n * eta
        delta_n = 1.0 / math.sqrt(s)
        if not eps_n < sigma_n < eta_n:
            raise ArithmeticError("schedule ordering failed; s too small")
        out.append(Case3Schedule(s, sigma_t, eta, delta_n, eps_n, sigma_n, eta_n))
    return out


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass
class PathSummary:
    exit_code: np.ndarray   # 0 none, 1 low, 2 high
    exit_time: np.ndarray
    final_x: np.ndarray
    occupation: np.ndarray

    @property
    def frac_high(self) -> float:
        return float((self.exit_code == 2).mean())

    @property
    def frac_low(self) -> float:
        return float((self.exit_code == 1).mean())

    @property
    def exited(self) -> np.ndarray:
        return self.exit_code != 0


def simulate_sde(scheme: DiffusionScheme, x0: float, horizon: float,
                 barriers: tuple[float, float], dt: float, seed: int,
                 n_paths: int, occ_window: tuple[float, float] | None = None,
                 key_offset: int = 0) -> PathSummary:
    """Batch Euler-Maruyama with bridge-corrected two-sided exit detection."""
    if dt > scheme.max_dt():
        raise ValueError(
            f"dt = {dt:g} too coarse for noise {scheme.sigma:g}; "
            f"needs dt <= {scheme.max_dt():g}")
    lo, hi = barriers
    keys = stream_keys(seed, n_paths, start=key_offset)
    code, times, fx, occ = sde_exit_batch(keys, x0, scheme.breaks, scheme.values,
                                          scheme.delta, scheme.sigma, lo, hi,
                                          horizon, dt, occ_window)
    return PathSummary(code, times, fx, occ)


def plateau_escape(sigma_n: float, t: float, n_paths: int, seed: int,
                   dt: float = 1e-3) -> PathSummary:
    """Escape attempts from the resting plateau of the STOP scheme.

    Inside the plateau the drift vanishes identically, so the restricted
    process is exactly scaled Brownian motion and the step size only sets
    the barrier-check resolution (bridge-corrected), not the path law.
    """
    root = math.sqrt(sigma_n)
    keys = stream_keys(seed, n_paths)
    code, times, fx, occ = sde_exit_batch(keys, 0.0, np.empty(0), np.zeros(1),
                                          0.0, sigma_n, -root, root, t, dt)
    return PathSummary(code, times, fx, occ)


def reflection_bound(sigma_n: float, t: float = 1.0) -> float:
    """4 P(W_t >= 1/sqrt(sigma)): tail bound for leaving the plateau by t."""
    c = 1.0 / math.sqrt(sigma_n)
    return 4.0 * float(1.0 - ndtr(c / math.sqrt(t)))
