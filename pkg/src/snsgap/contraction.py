"""Contraction engines for finite kernels and coupled flows.

Finite kernels carry a ground metric ``D``; Lipschitz seminorms and closeness
are taken with respect to it.  The Wasserstein distance used for the Doeblin
contraction is built from ``min(1, D / delta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.optimize import linprog

from .transport import (
    EmpiricalMeasure,
    GroundMetric,
    max_diagonal_mass,
    transport_simplex,
    w1_exact,
)


@dataclass(frozen=True, eq=False)
class FiniteKernel:
    P: np.ndarray
    metric: GroundMetric
    states: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float).copy()
        metric = self.metric if isinstance(self.metric, GroundMetric) else GroundMetric(self.metric)
        n = P.shape[0]
        if P.shape != (n, n):
            raise ValueError("transition matrix must be square")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix must be row-stochastic")
        if metric.matrix.shape != (n, n):
            raise ValueError("metric and transition matrix sizes differ")
        P.flags.writeable = False
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "states", tuple(self.states) or tuple(range(n)))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def D(self) -> np.ndarray:
        return self.metric.matrix

    def power(self, t: int) -> np.ndarray:
        return np.linalg.matrix_power(self.P, t)


def lazy_cycle_kernel(n: int = 5, laziness: float = 0.5) -> FiniteKernel:
    """Lazy nearest-neighbour walk on the n-cycle with the graph distance."""
    P = laziness * np.eye(n)
    for i in range(n):
        P[i, (i + 1) % n] += (1 - laziness) / 2
        P[i, (i - 1) % n] += (1 - laziness) / 2
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    return FiniteKernel(P, GroundMetric(np.minimum(gap, n - gap).astype(float)))


def ar1_kernel(n: int = 21, half_width: float = 2.0, rho: float = 0.5, s: float = 0.5) -> FiniteKernel:
    """Discretised Gaussian AR(1) chain on an evenly spaced grid, metric ``|x - y|``."""
    x = np.linspace(-half_width, half_width, n)
    P = np.exp(-((x[None, :] - rho * x[:, None]) ** 2) / (2 * s * s))
    P /= P.sum(axis=1, keepdims=True)
    return FiniteKernel(P, GroundMetric(np.abs(x[:, None] - x[None, :])))


# -- gradient bound ------------------------------------------------------------


def lipschitz_lp(c: np.ndarray, D: np.ndarray, lam: float) -> float:
    """``max c.phi`` subject to ``|phi| <= 1`` and ``phi_i - phi_j <= lam D_ij``."""
    n = len(c)
    rows, rhs = [], []
    for i in range(n):
        for j in range(n):
            if i != j:
                r = np.zeros(n)
                r[i], r[j] = 1.0, -1.0
                rows.append(r)
                rhs.append(lam * D[i, j])
    res = linprog(-np.asarray(c, float), A_ub=np.array(rows), b_ub=np.array(rhs),
                  bounds=[(-1.0, 1.0)] * n, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(-res.fun)


def lipschitz_gain(kernel: FiniteKernel, lam: float, power: int = 1) -> tuple[float, tuple[int, int]]:
    """``max over pairs of LP(x, y, lam) / D(x, y)`` and the maximizing pair."""
    Pt = kernel.power(power)
    best, arg = -math.inf, (0, 0)
    for x in range(kernel.n):
        for y in range(x + 1, kernel.n):
            if kernel.D[x, y] == 0:
                continue
            val = lipschitz_lp(Pt[x] - Pt[y], kernel.D, lam) / kernel.D[x, y]
            if val > best:
                best, arg = val, (x, y)
    return best, arg


@dataclass(frozen=True)
class Assumption2Report:
    holds: bool
    worst_pair: tuple[int, int]
    worst_lambda: float
    worst_margin: float
    gains: dict


def verify_assumption2(
    kernel: FiniteKernel,
    C: float,
    alpha1: float,
    lambda_grid: Sequence[float] = (0.1, 1.0, 10.0, 100.0),
    power: int = 1,
    tol: float = 1e-9,
) -> Assumption2Report:
    """Check ``|P phi(x) - P phi(y)| <= (C + alpha1 lam) D(x, y)`` on the Lipschitz-``lam`` ball."""
    gains = {}
    worst = (-math.inf, (0, 0), lambda_grid[0])
    for lam in lambda_grid:
        g, pair = lipschitz_gain(kernel, lam, power)
        gains[lam] = g
        margin = g - (C + alpha1 * lam)
        if margin > worst[0]:
            worst = (margin, pair, lam)
    return Assumption2Report(worst[0] <= tol, worst[1], worst[2], worst[0], gains)


def fit_assumption2(
    kernel: FiniteKernel,
    alpha1: float,
    lambda_grid: Sequence[float] = (0.1, 1.0, 10.0, 100.0),
    power: int = 1,
) -> float:
    """Smallest ``C`` passing :func:`verify_assumption2` on the grid for this ``alpha1``."""
    C = 0.0
    for lam in lambda_grid:
        g, _ = lipschitz_gain(kernel, lam, power)
        C = max(C, g - alpha1 * lam)
    return C


# -- minorization --------------------------------------------------------------


def check_assumption3(kernel: FiniteKernel, delta: float, t_powers: Sequence[int] = (1,)) -> float:
    """``min over t, x, y`` of the largest coupling mass on ``{D <= delta}``."""
    close = kernel.D <= delta
    a = 1.0
    for t in t_powers:
        Pt = kernel.power(t)
        for x in range(kernel.n):
            for y in range(x + 1, kernel.n):
                mu = EmpiricalMeasure.from_vector(Pt[x])
                nu = EmpiricalMeasure.from_vector(Pt[y])
                a = min(a, max_diagonal_mass(mu, nu, close).value)
    return a


# -- closed forms --------------------------------------------------------------


@dataclass(frozen=True)
class DoeblinConstants:
    delta: float
    alpha: float


def doeblin_rate(alpha1: float, C: float, a: float) -> DoeblinConstants:
    """``delta = (1 - alpha1) / (2 C)`` and ``alpha = max(1 - a/2, (1 + alpha1)/2)``."""
    if not 0 <= alpha1 < 1:
        raise ValueError("alpha1 must lie in [0, 1)")
    if not C > 0:
        raise ValueError("C must be positive")
    if not 0 < a <= 1:
        raise ValueError("a must lie in (0, 1]")
    return DoeblinConstants((1 - alpha1) / (2 * C), max(1 - a / 2, (1 + alpha1) / 2))


def harris_alpha1(alpha_star: float, beta: float, K_star: float) -> float:
    """``(1 + alpha_star beta K_star) / (1 + beta K_star)``."""
    if not 0 < alpha_star <= 1:
        raise ValueError("alpha_star must lie in (0, 1]")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if not K_star > 0:
        raise ValueError("K_star must be positive")
    return (1 + alpha_star * beta * K_star) / (1 + beta * K_star)


class EmptySet:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EmptySet"

    def __bool__(self) -> bool:
        return False


EMPTY_SET = EmptySet()


def lemma311_radius(K: float, delta: float, r: float, eta: float) -> float | EmptySet:
    """``K + V_*^{-1}((delta/K)^{1/(r-1)})`` for ``V_*(a) = exp(eta a^2)``.

    The level set is empty when ``delta / K > 1``.
    """
    if not (K > 0 and delta > 0 and eta > 0 and 0 < r < 1):
        raise ValueError("need K, delta, eta > 0 and r in (0, 1)")
    ratio = delta / K
    if ratio > 1:
        return EMPTY_SET
    return K + math.sqrt(math.log(ratio) / ((r - 1) * eta))


# -- Doeblin contraction check ---------------------------------------------------


@dataclass(frozen=True)
class DoeblinReport:
    passes: bool
    max_ratio: float
    alpha: float
    ratios: np.ndarray


def truncated_metric(kernel: FiniteKernel, delta: float) -> GroundMetric:
    return GroundMetric(np.minimum(1.0, kernel.D / delta))


def random_measure_pairs(n: int, trials: int, rng: np.random.Generator):
    """Dense, sparse and point-mass pairs of probability vectors."""
    for t in range(trials):
        kind = t % 3
        if kind == 0:
            p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        elif kind == 1:
            p = rng.dirichlet(np.full(n, 0.3))
            q = rng.dirichlet(np.full(n, 0.3))
        else:
            p, q = np.zeros(n), np.zeros(n)
            p[rng.integers(n)] = 1.0
            q[rng.integers(n)] = 1.0
        yield p, q


def verify_doeblin_contraction(
    kernel: FiniteKernel,
    delta: float,
    alpha: float,
    trials: int,
    rng: np.random.Generator | None = None,
    power: int = 1,
) -> DoeblinReport:
    """Ratios ``W_d(mu1 P, mu2 P) / W_d(mu1, mu2)`` with ``d = min(1, D/delta)``."""
    rng = np.random.default_rng(0) if rng is None else rng
    d = truncated_metric(kernel, delta).matrix
    Pt = kernel.power(power)
    ratios = []
    for p, q in random_measure_pairs(kernel.n, trials, rng):
        den = transport_simplex(p, q, d).value
        if den <= 1e-15:
            continue
        num = transport_simplex(p @ Pt, q @ Pt, d).value
        ratios.append(num / den)
    ratios = np.array(ratios)
    mx = float(ratios.max()) if ratios.size else 0.0
    return DoeblinReport(mx <= alpha + 1e-9, mx, alpha, ratios)


@dataclass(frozen=True)
class DoeblinPipeline:
    alpha1: float
    C: float
    a: float
    delta: float
    alpha: float
    assumption2: Assumption2Report
    report: DoeblinReport


def doeblin_pipeline(
    kernel: FiniteKernel,
    alpha1: float,
    trials: int = 500,
    rng: np.random.Generator | None = None,
    lambda_grid: Sequence[float] = (0.1, 1.0, 10.0, 100.0),
) -> DoeblinPipeline:
    """Fit ``C``, derive ``delta``, certify ``a`` at half the scale, and check the contraction.

    The minorization is measured on ``{D <= delta/2}``, the set on which the
    truncated metric is at most one half.
    """
    C = fit_assumption2(kernel, alpha1, lambda_grid)
    if C <= 0:
        raise ValueError(f"alpha1={alpha1} needs no C on this grid; pick a smaller alpha1")
    delta = (1 - alpha1) / (2 * C)
    grid = tuple(sorted(set(lambda_grid) | {1.0 / delta}))
    a2 = verify_assumption2(kernel, C, alpha1, grid)
    if not a2.holds:
        C = fit_assumption2(kernel, alpha1, grid)
        delta = (1 - alpha1) / (2 * C)
        a2 = verify_assumption2(kernel, C, alpha1, grid)
    a = check_assumption3(kernel, delta / 2)
    consts = doeblin_rate(alpha1, C, a)
    rep = verify_doeblin_contraction(kernel, consts.delta, consts.alpha, trials, rng)
    return DoeblinPipeline(alpha1, C, a, consts.delta, consts.alpha, a2, rep)


# -- stopping-time coupling ladder -------------------------------------------------


class CouplingModel(Protocol):
    """One-step joint moves for batches of coupled states."""

    def distance(self, x, y) -> np.ndarray: ...

    def step_inside(self, x, y, rng: np.random.Generator): ...

    def step_outside(self, x, y, rng: np.random.Generator): ...


class FiniteKernelCoupling:
    """Optimal coupling for ``min(1, D/delta)`` inside the band; maximal close mass outside."""

    def __init__(self, kernel: FiniteKernel, delta: float, entry: float):
        n = kernel.n
        self.kernel = kernel
        d = truncated_metric(kernel, delta).matrix
        close = kernel.D <= entry
        self._inside = np.zeros((n, n, n * n))
        self._outside = np.zeros((n, n, n * n))
        for x in range(n):
            for y in range(n):
                p, q = kernel.P[x], kernel.P[y]
                self._inside[x, y] = transport_simplex(p, q, d).plan.ravel()
                mu, nu = EmpiricalMeasure.from_vector(p), EmpiricalMeasure.from_vector(q)
                self._outside[x, y] = max_diagonal_mass(mu, nu, close).plan.matrix.ravel()
        self._inside = np.cumsum(self._inside, axis=-1)
        self._outside = np.cumsum(self._outside, axis=-1)

    def distance(self, x, y):
        return self.kernel.D[x, y]

    def _draw(self, cum, x, y, rng):
        rows = cum[x, y]
        u = rng.random(len(x))[:, None] * rows[:, -1:]
        idx = np.minimum((rows <= u).sum(axis=1), rows.shape[1] - 1)
        return np.divmod(idx, self.kernel.n)

    def step_inside(self, x, y, rng):
        return self._draw(self._inside, x, y, rng)

    def step_outside(self, x, y, rng):
        return self._draw(self._outside, x, y, rng)


@dataclass(frozen=True)
class LadderReport:
    s1_finite_freq: float
    s1_se: float
    r1_tail: np.ndarray
    r1_se: np.ndarray
    r1_bound: np.ndarray
    distance_series: np.ndarray
    episodes: int

    def r1_within_band(self, sigmas: float = 3.0) -> bool:
        """``tail <= bound (1 + sigmas * rel_se)`` at every ``n``, ``rel_se`` relative to the tail."""
        rel = np.divide(self.r1_se, self.r1_tail, out=np.zeros_like(self.r1_se),
                        where=self.r1_tail > 0)
        return bool(np.all(self.r1_tail <= self.r1_bound * (1 + sigmas * rel) + 1e-12))


def coupling_ladder_sim(
    model: CouplingModel,
    x0,
    y0,
    delta: float,
    alpha1: float,
    horizon: int,
    episodes: int,
    rng: np.random.Generator,
    a: float | None = None,
) -> LadderReport:
    """Simulate the band/outside coupling and record the first exit and entry times.

    ``s1`` is the first ``m`` with distance ``> delta`` (counted for episodes
    that start inside the entry band), ``r1`` the first ``m`` with distance
    ``<= (1 - alpha1) delta``.  Frequencies are over the finite horizon.
    """
    entry = (1 - alpha1) * delta
    x = np.full(episodes, x0) if np.ndim(x0) == 0 else np.array(x0)
    y = np.full(episodes, y0) if np.ndim(y0) == 0 else np.array(y0)
    dist = model.distance(x, y)
    inside = dist <= entry
    started_in = inside.copy()
    s1 = np.full(episodes, -1)
    r1 = np.where(inside, 0, -1)
    series = [float(np.mean(dist))]
    for m in range(1, horizon + 1):
        xi, yi = model.step_inside(x[inside], y[inside], rng) if inside.any() else ((), ())
        xo, yo = model.step_outside(x[~inside], y[~inside], rng) if (~inside).any() else ((), ())
        x, y = x.copy(), y.copy()
        x[inside], y[inside] = xi, yi
        x[~inside], y[~inside] = xo, yo
        dist = model.distance(x, y)
        exited = inside & (dist > delta)
        s1[exited & (s1 < 0)] = m
        entered = ~inside & (dist <= entry)
        r1[entered & (r1 < 0)] = m
        inside = (inside & ~exited) | entered
        series.append(float(np.mean(dist)))
    n_in = int(started_in.sum())
    freq = float(np.mean(s1[started_in] > 0)) if n_in else 0.0
    se = math.sqrt(freq * (1 - freq) / n_in) if n_in else 0.0
    far = ~started_in
    n_far = int(far.sum())
    ns = np.arange(horizon + 1)
    if n_far:
        r = r1[far]
        tail = np.array([np.mean((r < 0) | (r > n)) for n in ns])
        tse = np.sqrt(tail * (1 - tail) / n_far)
    else:
        tail = np.zeros(horizon + 1)
        tse = np.zeros(horizon + 1)
    bound = (1 - a) ** ns if a is not None else np.full(horizon + 1, np.nan)
    return LadderReport(freq, se, tail, tse, bound, np.array(series), episodes)


# -- two-point drift ---------------------------------------------------------------


@dataclass(frozen=True)
class DriftFit:
    alpha: float
    K: float
    holds: bool
    series: np.ndarray
    rho0: np.ndarray


def drift_constant(series: np.ndarray, rho0: np.ndarray, alpha: float) -> float:
    """``max over pairs and n >= 1 of (E_n - alpha^n rho0)^+``; ``series`` is ``(pairs, n_max+1)``."""
    n = np.arange(series.shape[1])[None, 1:]
    return float(max(0.0, np.max(series[:, 1:] - alpha**n * rho0[:, None])))


def fit_two_point_drift(series: np.ndarray, rho0: np.ndarray, slack: float | None = None) -> DriftFit:
    """Smallest ``alpha < 1`` whose ``K(alpha)`` is within ``slack`` of the best achievable."""
    series = np.atleast_2d(np.asarray(series, float))
    rho0 = np.atleast_1d(np.asarray(rho0, float))
    top = float(rho0.max()) if rho0.size else 0.0
    slack = 1e-9 * max(top, 1e-300) if slack is None else slack
    hi = 1.0 - 1e-12
    floor = drift_constant(series, rho0, hi)
    if top == 0.0:
        return DriftFit(0.0, floor, True, series, rho0)
    lo = 0.0
    if drift_constant(series, rho0, lo) <= floor + slack:
        hi = lo
    for _ in range(60):
        if hi - lo < 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if drift_constant(series, rho0, mid) <= floor + slack:
            hi = mid
        else:
            lo = mid
    K = drift_constant(series, rho0, hi)
    return DriftFit(hi, K, bool(hi < 1 and K < top), series, rho0)


FlowRunner = Callable[[object, object, int], np.ndarray]


def two_point_drift_check(
    runner: FlowRunner, pairs: Sequence, n_max: int, slack: float | None = None
) -> DriftFit:
    """``runner(x, y, n_max)`` returns the mean distance at ``n = 0..n_max``."""
    series = np.array([runner(x, y, n_max) for x, y in pairs])
    return fit_two_point_drift(series, series[:, 0], slack)


# -- Lyapunov decay functions --------------------------------------------------------


@dataclass(frozen=True)
class LyapunovModel:
    """Decay ``xi`` on ``[0, 1]`` with ``xi(1) < 1``, extended by ``xi(1)^[t] xi(t - [t])``."""

    xi: Callable[[float], float]
    r0: float = 0.5
    kappa: float = 1.0
    C: float = 1.0

    def __post_init__(self):
        if not self.xi(1.0) < 1:
            raise ValueError("xi(1) must be < 1")

    def extended(self, t: float) -> float:
        whole = math.floor(t)
        return self.xi(1.0) ** whole * self.xi(t - whole)

    def radius_after(self, t: float, r: float) -> float:
        return max(self.extended(t) * r, self.r0)


def sns_decay(nu: float) -> Callable[[float], float]:
    return lambda t: math.exp(-nu * t / 2)
