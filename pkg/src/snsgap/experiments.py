"""Desk-scale experiments: spectral gap, drift bounds, structure functions and friends.

Every ``run_*`` function returns a report dataclass whose ``table()`` gives a CSV
header and rows, and whose ``passed`` attribute is the experiment's own pass rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from .config import ExperimentConfig
from .fourier import (
    VorticityField,
    basis_coeffs,
    canonical_rep,
    grid_for,
    random_coeffs,
)
from .integrator import ForcingSpec, SimParams, Stepper, integrate, integrate_pairs
from .lyapunov import CylindricalObservable, linear_observable
from .transport import default_observables, ensemble_distance

# noise streams for reference runs are kept apart from ensemble streams
REFERENCE_STREAM_OFFSET = 1 << 20


# -- shared helpers --------------------------------------------------------------


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    slope_se: float
    n: int


def linear_fit(x, y) -> LinearFit:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 3:
        raise ValueError("need at least three points for a fit with an error estimate")
    if np.ptp(y) == 0.0:
        return LinearFit(0.0, float(y[0]), float("nan"), 0.0, len(x))
    res = stats.linregress(x, y)
    return LinearFit(float(res.slope), float(res.intercept), float(res.rvalue**2),
                     float(res.stderr), len(x))


def _rng(seed: int, *tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tag])


def field_from_modes(cutoff: int, modes) -> VorticityField:
    return VorticityField.from_modes(cutoff, dict(modes))


def _batch(c: np.ndarray, B: int) -> np.ndarray:
    return np.broadcast_to(c, (B,) + c.shape).copy()


def _log_d_eta_pair(g, x: np.ndarray, d: np.ndarray, eta: float) -> np.ndarray:
    """``log(|d| (exp(eta |x|^2) + exp(eta |x + d|^2)))`` without forming ``y - x``."""
    nd = g.norm(d)
    with np.errstate(divide="ignore"):
        return np.log(nd) + np.logaddexp(eta * g.norm_sq(x), eta * g.norm_sq(x + d))


def _log_mean_exp(v: np.ndarray) -> float:
    if np.all(v == -np.inf):
        return -math.inf
    m = float(np.max(v))
    return m + math.log(float(np.mean(np.exp(v - m))))


def _mean_se(v: np.ndarray, axis=0):
    v = np.asarray(v, float)
    n = v.shape[axis]
    return v.mean(axis=axis), v.std(axis=axis, ddof=1) / math.sqrt(n)


def eta_ceiling(forcing: ForcingSpec, nu: float) -> float:
    """``nu / (4 |Q|)``: the drift bounds need ``eta`` strictly below this."""
    return nu / (4 * forcing.q_norm)


def velocity_at_points(c: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Velocity ``K w`` at physical points; returns shape ``(..., P, 2)``."""
    g = grid_for(c.shape[-1] - 1)
    u1, u2 = g.biot_savart(c)
    pts = np.atleast_2d(np.asarray(points, float))
    phase = np.exp(1j * (pts[:, 0, None, None] * g.k1 + pts[:, 1, None, None] * g.k2))
    phase = g.weight * phase
    v1 = np.tensordot(u1, phase, axes=([-2, -1], [1, 2])).real
    v2 = np.tensordot(u2, phase, axes=([-2, -1], [1, 2])).real
    return np.stack([v1, v2], axis=-1)


# -- spectral gap ----------------------------------------------------------------------


ETA_SWEEP = (0.01, 0.05, 0.1)


@dataclass
class GapEstimate:
    t: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    gamma: float
    gamma_se: float
    r2: float
    status: str
    window: tuple[float, float]
    eta: float
    sweep: dict = field(default_factory=dict)
    sweep_series: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.status == "coupled-at-start":
            return True
        return self.status == "ok" and self.gamma > 0 and self.r2 >= 0.9

    def table(self):
        header = ["t", "d_eta_upper", "w1_observables_lower"]
        cols = [self.t, self.upper, self.lower]
        for s, series in self.sweep_series.items():
            header.append(f"d_eta_upper_eta{s}")
            cols.append(series)
        return header, list(zip(*cols))

    def fit_table(self):
        header = ["eta", "gamma", "gamma_se", "r2", "status"]
        rows = [(self.eta, self.gamma, self.gamma_se, self.r2, self.status)]
        for s, (eta, gam, se, r2) in self.sweep.items():
            rows.append((eta, gam, se, r2, "sweep"))
        return header, rows


def _fit_decay(t, series, window) -> tuple[float, float, float, str]:
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    s = series[sel]
    if np.all(series == 0):
        return float("nan"), float("nan"), float("nan"), "coupled-at-start"
    if np.any(s <= 0) or sel.sum() < 3:
        return float("nan"), float("nan"), float("nan"), "degenerate"
    fit = linear_fit(t[sel], np.log(s))
    if fit.slope == 0.0:
        return float("nan"), float("nan"), float("nan"), "flat"
    return -fit.slope, fit.slope_se, fit.r2, "ok"


def run_gap_estimate(
    config: ExperimentConfig,
    x0: VorticityField | None = None,
    y0: VorticityField | None = None,
    fit_window: tuple[float, float] | None = None,
    eta_sweep: Sequence[float] = ETA_SWEEP,
) -> GapEstimate:
    """Synchronously coupled ensembles from ``x0`` and ``y0``.

    The upper surrogate is the ensemble mean of the coupled ``d_eta`` bound, the
    lower one the best 1-Lipschitz observable W1 between the two ensembles.
    """
    p, f = config.params, config.forcing
    N = p.cutoff
    g = grid_for(N, p.grid_factor)
    x0 = field_from_modes(N, config.x0) if x0 is None else x0
    y0 = field_from_modes(N, config.y0) if y0 is None else y0
    B = config.ensemble_size
    eta = config.metric.eta
    ceiling = eta_ceiling(f, p.nu)
    sweep_etas = {s: s * ceiling for s in eta_sweep}
    obs = default_observables(N, f.forced)
    rows = []
    sweep_rows = []

    def observer(n, t, x, d):
        logs = _log_d_eta_pair(g, x, d, eta)
        up = math.exp(_log_mean_exp(logs))
        low = ensemble_distance(x, x + d, "w1_observables", obs).value
        rows.append((t, up, low))
        sweep_rows.append([math.exp(_log_mean_exp(_log_d_eta_pair(g, x, d, e)))
                           for e in sweep_etas.values()])

    integrate_pairs(_batch(x0.coeffs, B), _batch(y0.coeffs, B), f, p,
                    observer=observer, stride=config.record_stride)
    a = np.array(rows)
    t, upper, lower = a[:, 0], a[:, 1], a[:, 2]
    window = fit_window or (config.burn_in * p.horizon, p.horizon)
    gamma, se, r2, status = _fit_decay(t, upper, window)
    sw = np.array(sweep_rows)
    sweep, sweep_series = {}, {}
    for i, (s, e) in enumerate(sweep_etas.items()):
        gs, ses, r2s, _ = _fit_decay(t, sw[:, i], window)
        sweep[s] = (e, gs, ses, r2s)
        sweep_series[s] = sw[:, i]
    return GapEstimate(t, upper, lower, gamma, se, r2, status, tuple(window), eta, sweep, sweep_series)


# -- exponential drift bounds ------------------------------------------------------------


@dataclass(frozen=True)
class ScalarOracleResult:
    lhs: float
    se: float
    rhs: float
    status: str

    @property
    def passed(self) -> bool | None:
        if self.status != "ok":
            return None
        return self.lhs <= self.rhs + 3 * self.se


def scalar_oracle_rhs(b1: float, b2: float, b3: float, u0: float, t: float) -> float:
    if b3 >= b2:
        return math.inf
    return b2 * math.exp(2 * b1 / b2) / (b2 - b3) * math.exp(u0 * math.exp(-b2 * t / 2))


def run_scalar_oracle(
    b1: float = 1.0,
    b2: float = 2.0,
    b3: float = 1.0,
    u0: float = 0.0,
    t: float = 1.0,
    n_paths: int = 100_000,
    h: float = 1e-3,
    rng: np.random.Generator | None = None,
) -> ScalarOracleResult:
    """``dU = (b1 - b2 U) dt + sqrt(b3 U) dB`` by full-truncation Euler; ``Z = U``."""
    rng = np.random.default_rng(0) if rng is None else rng
    rhs = scalar_oracle_rhs(b1, b2, b3, u0, t)
    n = int(round(t / h))
    U = np.full(n_paths, float(u0))
    Up = np.maximum(U, 0.0)
    integral = np.zeros(n_paths)
    sq = math.sqrt(h)
    for _ in range(n):
        U = U + (b1 - b2 * Up) * h + np.sqrt(b3 * Up) * sq * rng.standard_normal(n_paths)
        new = np.maximum(U, 0.0)
        integral += 0.5 * h * (Up + new)
        Up = new
    vals = np.exp(Up + b2 * math.exp(-b2 * t / 4) / 4 * integral)
    lhs, se = _mean_se(vals)
    status = "ok" if math.isfinite(rhs) else "degenerate"
    return ScalarOracleResult(float(lhs), float(se), rhs, status)


@dataclass
class LyapunovReport:
    eta: float
    times: tuple
    norms: tuple
    lhs: np.ndarray
    lhs_se: np.ndarray
    C: np.ndarray
    spread: np.ndarray
    tolerance: float
    scalar: ScalarOracleResult | None

    @property
    def stable(self) -> bool:
        return bool(np.all(self.spread <= self.tolerance))

    @property
    def passed(self) -> bool:
        ok = self.stable
        if self.scalar is not None and self.scalar.passed is not None:
            ok = ok and self.scalar.passed
        return ok

    def table(self):
        rows = []
        for i, nrm in enumerate(self.norms):
            for j, t in enumerate(self.times):
                rows.append((nrm, t, self.lhs[i, j], self.lhs_se[i, j], self.C[i, j]))
        return ["w0_norm", "t", "lhs_mc", "lhs_se", "fitted_C"], rows


def _unit_direction(cutoff: int) -> np.ndarray:
    return basis_coeffs(cutoff, (1, 0), "cos")


def run_lyapunov_check(
    config: ExperimentConfig,
    times: Sequence[float] = (0.25, 0.5, 1.0),
    norms: Sequence[float] = (0.0, 1.0, 2.0),
    n_paths: int = 512,
    eta: float | None = None,
    tolerance: float = 2.0,
    noise: bool = True,
    scalar: dict | None = None,
) -> LyapunovReport:
    """Monte Carlo left side of the exponential drift bound and the constant it implies.

    ``scalar`` holds keyword arguments for :func:`run_scalar_oracle`; pass
    ``{}`` for the defaults or ``None`` to skip the scalar part.
    """
    p, f = config.params, config.forcing
    ceiling = eta_ceiling(f, p.nu) if noise else math.inf
    eta = 0.1 * eta_ceiling(f, p.nu) if eta is None else eta
    if not 0 < eta < ceiling:
        raise ValueError(f"eta={eta} must lie in (0, {ceiling})")
    g = grid_for(p.cutoff, p.grid_factor)
    steps = [int(round(t / p.dt)) for t in times]
    n_max = max(steps)
    weight = p.nu * eta * math.exp(-p.nu / 2) / 2
    lhs = np.zeros((len(norms), len(times)))
    se = np.zeros_like(lhs)
    C = np.zeros_like(lhs)
    unit = _unit_direction(p.cutoff)
    for i, nrm in enumerate(norms):
        h1_prev = None
        integral = np.zeros(n_paths)
        captured = {}

        def observer(n, t, c):
            nonlocal h1_prev, integral
            h1 = g.norm_sq(c, 1.0)
            if h1_prev is not None:
                integral = integral + 0.5 * p.dt * (h1_prev + h1)
            h1_prev = h1
            if n in steps:
                captured[n] = eta * g.norm_sq(c) + weight * integral

        integrate(_batch(nrm * unit, n_paths), f, p, n_steps=n_max, observer=observer, noise=noise)
        for j, (t, n) in enumerate(zip(times, steps)):
            m, s = _mean_se(np.exp(captured[n]))
            lhs[i, j], se[i, j] = m, s
            C[i, j] = m / math.exp(eta * nrm * nrm * math.exp(-p.nu * t / 2))
    spread = C.max(axis=0) / C.min(axis=0)
    sc = None
    if scalar is not None:
        kw = dict(scalar)
        kw.setdefault("rng", _rng(p.seed, 51))
        sc = run_scalar_oracle(**kw)
    return LyapunovReport(eta, tuple(times), tuple(norms), lhs, se, C, spread, tolerance, sc)


# -- structure functions -------------------------------------------------------------------


@dataclass
class StructureReport:
    points: np.ndarray
    components: tuple
    reference: float
    reference_se: float
    t: np.ndarray
    ensemble: np.ndarray
    ensemble_se: np.ndarray
    rate: float
    r2: float

    @property
    def difference(self) -> np.ndarray:
        return np.abs(self.ensemble - self.reference)

    @property
    def passed(self) -> bool:
        return bool(self.rate > 0)

    def table(self):
        rows = zip(self.t, self.ensemble, self.ensemble_se, self.difference)
        return ["t", "ensemble_moment", "ensemble_se", "abs_difference"], list(rows)


def _moment(c: np.ndarray, points: np.ndarray, components: Sequence[int]) -> np.ndarray:
    v = velocity_at_points(c, points)
    out = np.ones(v.shape[:-2])
    for i, comp in enumerate(components):
        out = out * v[..., i, comp]
    return out


def run_structure_functions(
    config: ExperimentConfig,
    points: Sequence[Sequence[float]],
    components: Sequence[int],
    v0: VorticityField | None = None,
    reference_horizon: float = 200.0,
    reference_burn_in: float = 20.0,
    reference_stride: int = 20,
    reference_chains: int = 1,
    reference_batches: int = 20,
) -> StructureReport:
    """Ensemble product moments of the velocity against a long-run time average.

    The reference uses ``reference_chains`` independent long runs (one by
    default) sampled every ``reference_stride`` steps after burn-in.
    """
    n = len(points)
    if not 1 <= n <= 3:
        raise ValueError(f"moment order {n} not supported; use 1, 2 or 3 points")
    if len(components) != n or any(c not in (0, 1) for c in components):
        raise ValueError("one velocity component (0 or 1) per point is required")
    p, f = config.params, config.forcing
    pts = np.asarray(points, float)
    v0 = field_from_modes(p.cutoff, config.x0) if v0 is None else v0

    burn_steps = int(round(reference_burn_in / p.dt))
    ref_steps = burn_steps + int(round(reference_horizon / p.dt))
    samples = []

    def ref_obs(k, t, c):
        if k > burn_steps:
            samples.append(_moment(c, pts, components))

    ids = REFERENCE_STREAM_OFFSET + np.arange(reference_chains)
    integrate(_batch(v0.coeffs, reference_chains), f, p, n_steps=ref_steps, traj_ids=ids,
              observer=ref_obs, stride=reference_stride)
    s = np.concatenate(samples)
    ref = float(s.mean())
    batches = np.array_split(np.stack(samples), reference_batches)
    bm = np.array([b.mean() for b in batches])
    ref_se = float(bm.std(ddof=1) / math.sqrt(len(bm)))

    rows = []

    def ens_obs(k, t, c):
        m, e = _mean_se(_moment(c, pts, components))
        rows.append((t, m, e))

    integrate(_batch(v0.coeffs, config.ensemble_size), f, p, observer=ens_obs,
              stride=config.record_stride)
    a = np.array(rows)
    t, ens, ens_se = a[:, 0], a[:, 1], a[:, 2]
    diff = np.abs(ens - ref)
    end = config.burn_in * p.horizon if config.burn_in > 0 else p.horizon
    sel = (t <= end) & (diff > 0)
    if sel.sum() >= 3:
        fit = linear_fit(t[sel], np.log(diff[sel]))
        rate, r2 = -fit.slope, fit.r2
    else:
        rate, r2 = float("nan"), float("nan")
    return StructureReport(pts, tuple(components), ref, ref_se, t, ens, ens_se, rate, r2)


# -- parameter continuity --------------------------------------------------------------------


@dataclass
class ContinuityReport:
    rows: list
    slopes: dict
    invariant_slopes: dict
    target: float = 2.0
    tolerance: float = 0.3

    @property
    def passed(self) -> bool:
        return all(abs(fit.slope - self.target) <= self.tolerance for fit in self.slopes.values())

    def table(self):
        return ["parameter", "eps", "param_distance", "mean_sq_distance", "mean_sq_se",
                "w1_observables_lower"], self.rows


def perturb(config: ExperimentConfig, kind: str, eps: float, mode=(1, 0)):
    """Perturbed ``(forcing, params)`` and the parameter distance ``d``.

    ``q`` moves the amplitude of ``mode``, which changes ``Q`` on both ``+-mode``;
    the mean force gets a real coefficient at ``mode`` with ``|delta fbar| = eps``.
    """
    p, f = config.params, config.forcing
    if kind == "nu":
        return f, p.replace(nu=p.nu + eps), abs(eps)
    rep = canonical_rep(mode)
    if kind == "q":
        if rep not in f.forced:
            raise ValueError(f"mode {mode} is not forced")
        q0 = f.amplitudes[f.forced.index(rep)]
        return f.with_amplitude(rep, q0 + eps), p, math.sqrt(2) * abs(eps)
    if kind == "fbar":
        mf = dict(f.mean_force)
        mf[rep] = mf.get(rep, 0.0) + eps / math.sqrt(2)
        return f.with_mean_force(mf), p, abs(eps)
    raise ValueError(f"unknown parameter kind {kind!r}")


def run_param_continuity(
    config: ExperimentConfig,
    eps: float = 0.05,
    ladder: Sequence[float] = (1.0, 0.5, 0.25),
    kinds: Sequence[str] = ("nu", "q", "fbar"),
    t: float = 5.0,
    n_paths: int = 128,
    w0: VorticityField | None = None,
    mode=(1, 0),
    invariant_horizon: float | None = None,
) -> ContinuityReport:
    """Same-noise runs under perturbed parameters; mean squared distance at ``t``.

    With ``invariant_horizon`` set, the ensembles are also run that long and
    the observable W1 lower bound between them is fitted against ``d``.
    """
    p, f = config.params, config.forcing
    w0 = field_from_modes(p.cutoff, config.x0) if w0 is None else w0
    g = grid_for(p.cutoff, p.grid_factor)
    W0 = _batch(w0.coeffs, n_paths)
    n_t = int(round(t / p.dt))
    base, _ = integrate(W0, f, p, n_steps=n_t)
    obs = default_observables(p.cutoff, f.forced)
    base_long = None
    if invariant_horizon is not None:
        base_long, _ = integrate(W0, f, p, n_steps=int(round(invariant_horizon / p.dt)))
    rows, slopes, inv = [], {}, {}
    for kind in kinds:
        ds, ms, ws = [], [], []
        for s in ladder:
            e = eps * s
            fy, py, d = perturb(config, kind, e, mode)
            if d == 0:
                yT = base
            else:
                yT, _ = integrate(W0, fy, py, n_steps=n_t)
            m, se = _mean_se(g.norm_sq(yT - base))
            w1 = float("nan")
            if base_long is not None:
                y_long = base_long if d == 0 else integrate(
                    W0, fy, py, n_steps=int(round(invariant_horizon / p.dt)))[0]
                w1 = ensemble_distance(base_long, y_long, "w1_observables", obs).value
            rows.append((kind, e, d, float(m), float(se), w1))
            if d > 0:
                ds.append(d)
                ms.append(m)
                ws.append(w1)
        if len(ds) >= 3:
            slopes[kind] = linear_fit(np.log(ds), np.log(ms))
            if base_long is not None and all(w > 0 for w in ws):
                inv[kind] = linear_fit(np.log(ds), np.log(ws))
    return ContinuityReport(rows, slopes, inv)


# -- Jacobian check ----------------------------------------------------------------------------


@dataclass
class JacobianReport:
    eps: np.ndarray
    rel_error: np.ndarray
    fit: LinearFit
    slope_target: float = 1.0
    slope_tol: float = 0.2

    @property
    def passed(self) -> bool:
        return abs(self.fit.slope - self.slope_target) <= self.slope_tol

    def table(self):
        return ["eps", "rel_error"], list(zip(self.eps, self.rel_error))


def run_jacobian_fd(
    config: ExperimentConfig,
    eps: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5),
    T: float = 1.0,
    w: np.ndarray | None = None,
    xi: np.ndarray | None = None,
    traj_id: int = 0,
) -> JacobianReport:
    """Finite-difference quotients of the flow against the propagated tangent.

    Every perturbed copy shares the base trajectory's noise.  The quotient is
    integrated as a coupled difference, so small ``eps`` does not lose digits
    to cancellation.
    """
    p, f = config.params, config.forcing
    N = p.cutoff
    g = grid_for(N, p.grid_factor)
    if w is None:
        w = random_coeffs(N, _rng(p.seed, 71), decay=1.5)
        w = w / g.norm(w)
    if xi is None:
        xi = random_coeffs(N, _rng(p.seed, 72), decay=1.5)
        xi = xi / g.norm(xi)
    eps = np.asarray(eps, float)
    n_t = int(round(T / p.dt))
    ids = np.full(len(eps), traj_id)
    _, J = integrate(w[None], f, p, n_steps=n_t, traj_ids=ids[:1], tangents=xi[None, None])
    J = J[0, 0]
    _, d = integrate_pairs(_batch(w, len(eps)), w + eps[:, None, None] * xi, f, p,
                           n_steps=n_t, traj_ids=ids)
    rel = g.norm(d / eps[:, None, None] - J) / g.norm(J)
    return JacobianReport(eps, rel, linear_fit(np.log(eps), np.log(rel)))


# -- Galerkin truncation -----------------------------------------------------------------------


@dataclass
class GalerkinReport:
    ladder: tuple
    mean_sq: np.ndarray
    mean_sq_se: np.ndarray
    jacobian_diff: np.ndarray
    min_ratio_required: float = 1.5

    @property
    def ratios(self) -> np.ndarray:
        return self.mean_sq[:-1] / self.mean_sq[1:]

    @property
    def passed(self) -> bool:
        return bool(np.all(self.ratios >= self.min_ratio_required))

    def table(self):
        rows = zip(self.ladder, self.mean_sq, self.mean_sq_se, self.jacobian_diff)
        return ["n", "mean_sq_rho", "mean_sq_rho_se", "jacobian_probe_diff_lower"], list(rows)


DEFAULT_PROBES = (((1, 0), "cos"), ((1, 1), "sin"), ((0, 1), "cos"), ((2, 1), "cos"))


def run_galerkin_convergence(
    config: ExperimentConfig,
    ladder: Sequence[int] = (2, 4, 8, 12),
    T: float = 1.0,
    n_pairs: int = 128,
    decay: float = 1.5,
    w: np.ndarray | None = None,
    n_jacobian: int = 4,
    probes=DEFAULT_PROBES,
) -> GalerkinReport:
    """Same-noise pairs ``(w, Pi_n w)``; ``E |rho_T|^2`` along the ladder.

    The Jacobian difference is measured by its action on a few low-mode unit
    probes (a lower bound for the operator norm).
    """
    p, f = config.params, config.forcing
    N = p.cutoff
    if any(n >= N for n in ladder):
        raise ValueError(f"ladder entries must stay below the cutoff {N}")
    g = grid_for(N, p.grid_factor)
    if w is None:
        w = random_coeffs(N, _rng(p.seed, 61), (n_pairs,), decay)
        w = w / g.norm(w)[:, None, None]
    n_t = int(round(T / p.dt))
    xi = np.stack([basis_coeffs(N, k, kind) for k, kind in probes])
    Jw = None
    if n_jacobian:
        Jw = integrate(w[:n_jacobian], f, p, n_steps=n_t,
                       tangents=_batch(xi, n_jacobian))[1]
    ms, ses, jd = [], [], []
    for n in ladder:
        wn = g.project(w, n)
        _, d = integrate_pairs(wn, w, f, p, n_steps=n_t)
        m, se = _mean_se(g.norm_sq(d))
        ms.append(m)
        ses.append(se)
        if n_jacobian:
            Jn = integrate(wn[:n_jacobian], f, p, n_steps=n_t,
                           tangents=_batch(xi, n_jacobian))[1]
            jd.append(float(np.max(g.norm(Jw - Jn))))
        else:
            jd.append(float("nan"))
    return GalerkinReport(tuple(ladder), np.array(ms), np.array(ses), np.array(jd))


# -- generator ------------------------------------------------------------------------------


def default_generator_family() -> list[CylindricalObservable]:
    """Linear in an unforced mode, square of a forced coordinate, and a mixed product."""
    phi1 = linear_observable((2, 1), "cos")
    phi2 = CylindricalObservable(
        (((1, 0), "cos"),),
        lambda z: z[..., 0] ** 2,
        lambda z: 2 * z,
        lambda z: np.full(z.shape + (1,), 2.0),
        name="cos(1,0)^2",
    )

    def hess3(z):
        a, b = z[..., 0], z[..., 1]
        h = np.empty(z.shape + (2,))
        h[..., 0, 0] = -np.cos(a) * b
        h[..., 0, 1] = h[..., 1, 0] = -np.sin(a)
        h[..., 1, 1] = 0.0
        return h

    phi3 = CylindricalObservable(
        (((1, 1), "cos"), ((0, 1), "sin")),
        lambda z: np.cos(z[..., 0]) * z[..., 1],
        lambda z: np.stack([-np.sin(z[..., 0]) * z[..., 1], np.cos(z[..., 0])], axis=-1),
        hess3,
        name="cos(cos(1,1))*sin(0,1)",
    )
    return [phi1, phi2, phi3]


def generator_value(phi: CylindricalObservable, c: np.ndarray, spec: ForcingSpec, params: SimParams) -> float:
    """``nu <Lap Dphi, w> - <B(Kw, Dphi), w> + <fbar, Dphi> + 1/2 sum_j q_j^2 d_jj phi``."""
    g = grid_for(params.cutoff, params.grid_factor)
    D = phi.gradient(c)
    val = -params.nu * float(g.inner(g.ksq * D, c))
    if params.nonlinear:
        u1, u2 = g.biot_savart(c)
        val -= float(g.inner(g.advect(u1, u2, D), c))
    val += float(g.inner(spec.mean_force_coeffs(params.cutoff), D))
    H = phi.hess(phi.coords(c))
    index = {(canonical_rep(k), kind): i for i, (k, kind) in enumerate(phi.modes)}
    for k, q in zip(spec.forced, spec.amplitudes):
        for kind in ("cos", "sin"):
            i = index.get((k, kind))
            if i is not None:
                val += 0.5 * q * q * float(H[i, i])
    return val


def whitened_antithetic(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """``n`` standard normal vectors with sample mean exactly 0 and covariance exactly I."""
    half = rng.standard_normal((n // 2, dim))
    L = np.linalg.cholesky(half.T @ half / (n // 2))
    half = np.linalg.solve(L, half.T).T
    return np.concatenate([half, -half])


@dataclass
class GeneratorReport:
    names: tuple
    hs: tuple
    residual: np.ndarray
    mc_se: np.ndarray
    slopes: np.ndarray
    min_slope: float = 0.5

    @property
    def max_residual(self) -> np.ndarray:
        return self.residual.max(axis=1)

    @property
    def passed(self) -> bool:
        r = self.max_residual
        mono = np.all((np.diff(r, axis=1) < 0) | (r[:, 1:] == 0), axis=1)
        return bool(np.all(self.slopes >= self.min_slope) and np.all(mono))

    def table(self):
        rows = []
        for i, name in enumerate(self.names):
            for j, h in enumerate(self.hs):
                rows.append((name, h, self.max_residual[i, j], self.mc_se[i, :, j].max(),
                             self.slopes[i]))
        return ["phi", "h", "max_residual", "max_mc_se", "fitted_slope"], rows


def generator_states(cutoff: int, rng: np.random.Generator, count: int = 5, decay: float = 2.0):
    g = grid_for(cutoff)
    c = random_coeffs(cutoff, rng, (count,), decay)
    norms = np.linspace(0.5, 2.5, count)
    return c * (norms / g.norm(c))[:, None, None]


def _residual_slope(hs, r) -> float:
    # an observable the scheme reproduces exactly has no rate to fit
    if np.all(r == 0):
        return math.inf
    return linear_fit(np.log(hs), np.log(r)).slope


def run_generator_check(
    config: ExperimentConfig,
    family: Sequence[CylindricalObservable] | None = None,
    states: np.ndarray | None = None,
    hs: Sequence[float] = (1e-2, 1e-3, 1e-4),
    n_samples: int = 100_000,
) -> GeneratorReport:
    """One-step weak residual ``|(E phi(w_h) - phi(w)) / h - L phi(w)|``.

    The step's noise only moves the forced coordinates, by ``sigma_k g``; the
    drift is computed once per state and step size.
    """
    p, f = config.params, config.forcing
    family = default_generator_family() if family is None else list(family)
    states = generator_states(p.cutoff, _rng(p.seed, 71)) if states is None else states
    n_f = len(f.forced)
    res = np.zeros((len(family), len(states), len(hs)))
    se = np.zeros_like(res)
    for s, c in enumerate(states):
        G = whitened_antithetic(_rng(p.seed, 72, s), n_samples, 2 * n_f).reshape(-1, n_f, 2)
        L = [generator_value(phi, c, f, p) for phi in family]
        for j, h in enumerate(hs):
            st = Stepper(f, p, dt=h)
            drift = st.drift(c)
            for i, phi in enumerate(family):
                z = np.broadcast_to(phi.coords(drift), (len(G), len(phi.modes))).copy()
                for m, (k, kind) in enumerate(phi.modes):
                    rep = canonical_rep(k)
                    if rep in f.forced:
                        fi = f.forced.index(rep)
                        z[:, m] += st.sigma[fi] * G[:, fi, 0 if kind == "cos" else 1]
                vals = phi.f(z)
                base = float(phi.value(c))
                m, e = _mean_se(vals)
                res[i, s, j] = abs((m - base) / h - L[i])
                se[i, s, j] = e / h
    slopes = np.array([_residual_slope(hs, res[i].max(axis=0)) for i in range(len(family))])
    return GeneratorReport(tuple(phi.name for phi in family), tuple(hs), res, se, slopes)


# -- a-priori path bounds ---------------------------------------------------------------------


@dataclass(frozen=True)
class AprioriItem:
    name: str
    passed: bool
    constants: dict
    detail: str = ""


@dataclass
class AprioriReport:
    eta: float
    items: list

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)

    def table(self):
        rows = []
        for it in self.items:
            consts = ";".join(f"{k}={v!r}" for k, v in sorted(it.constants.items()))
            rows.append((it.name, "pass" if it.passed else "fail", consts, it.detail))
        return ["item", "result", "fitted_constants", "detail"], rows


@dataclass
class _PathFunctionals:
    t: np.ndarray
    l2sq: np.ndarray      # (T, B)
    h1sq: np.ndarray      # (T, B)
    J: np.ndarray         # (T, B, P)
    J1: np.ndarray        # (T, B, P)
    xi0: np.ndarray       # (P,)

    @property
    def enstrophy_integral(self) -> np.ndarray:
        return cumulative_trapezoid(self.h1sq, self.t, axis=0, initial=0.0)

    @property
    def jacobian_h1_integral(self) -> np.ndarray:
        return cumulative_trapezoid(self.J1**2, self.t, axis=0, initial=0.0)


def _collect_functionals(c0, xi, spec, params, n_steps, noise) -> _PathFunctionals:
    g = grid_for(params.cutoff, params.grid_factor)
    rec = {"t": [], "l2": [], "h1": [], "J": [], "J1": []}

    def observer(n, t, state):
        c, x = state
        rec["t"].append(t)
        rec["l2"].append(g.norm_sq(c))
        rec["h1"].append(g.norm_sq(c, 1.0))
        rec["J"].append(g.norm(x))
        rec["J1"].append(g.norm(x, 1.0))

    B = c0.shape[0]
    integrate(c0, spec, params, n_steps=n_steps, observer=observer, tangents=_batch(xi, B),
              noise=noise)
    return _PathFunctionals(np.array(rec["t"]), np.array(rec["l2"]), np.array(rec["h1"]),
                            np.array(rec["J"]), np.array(rec["J1"]), g.norm(xi))


def _min_rate_constant(L: np.ndarray, t: np.ndarray) -> float:
    """Smallest ``C > 0`` with ``L(t) <= log C + C t`` for every sample."""
    worst = lambda C: np.max(L - math.log(C) - C * t[:, None, None])  # noqa: E731
    lo, hi = 1e-12, 1.0
    while worst(hi) > 0:
        hi *= 2
        if hi > 1e12:
            return math.inf
    if worst(lo) <= 0:
        return lo
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if worst(mid) <= 0:
            hi = mid
        else:
            lo = mid
        if hi / lo < 1 + 1e-12:
            break
    return hi


def run_apriori_check(
    config: ExperimentConfig,
    norms: Sequence[float] = (0.0, 1.0, 2.0),
    n_paths: int = 64,
    T: float = 4.0,
    eta: float | None = None,
    powers: Sequence[int] = (2, 4),
    spread: float = 2.0,
    holdout_slack: float = 1.5,
    noise: bool = True,
    probes=DEFAULT_PROBES[:2],
) -> AprioriReport:
    """Path functionals behind the a-priori bounds, with fitted constants.

    Moment bounds: the fitted constant, normalized by the initial-condition
    factor, must agree within ``spread`` across ``norms``.  Path-wise Jacobian
    bounds: constants are fitted on even-indexed paths and must cover the
    odd-indexed paths after inflating by ``holdout_slack``.
    """
    p, f = config.params, config.forcing
    eta = config.metric.eta if eta is None else eta
    N = p.cutoff
    n_steps = int(round(T / p.dt))
    unit = _unit_direction(N)
    xi = np.stack([basis_coeffs(N, k, kind) for k, kind in probes])
    runs = [_collect_functionals(_batch(nrm * unit, n_paths), xi, f, p, n_steps, noise)
            for nrm in norms]
    t = runs[0].t
    items = []
    burn = t >= config.burn_in * T

    # exponential moment of the enstrophy integral
    slopes, series = [], []
    second = t >= T / 2
    for r in runs:
        X = p.nu * eta * r.enstrophy_integral
        lm = np.array([_log_mean_exp(X[k]) for k in range(len(t))])
        series.append(lm)
        slopes.append(linear_fit(t[second], lm[second]).slope if second.sum() >= 3 else 0.0)
    gamma = max(0.0, max(slopes)) * 1.1 + 1e-6
    Cs, uniform = [], True
    for nrm, lm in zip(norms, series):
        M = np.exp(lm - gamma * t)
        uniform &= bool(M[second].max() <= spread * M[~second].max())
        Cs.append(float(M.max()) / math.exp(eta * nrm * nrm))
    ok = uniform and max(Cs) <= spread * min(Cs)
    items.append(AprioriItem("enstrophy_integral_exp_moment", ok,
                             {"gamma": gamma, "C_max": max(Cs), "C_min": min(Cs)}))

    # polynomial moments of the H1 norm
    for k in powers:
        Cs, flat = [], True
        for nrm, r in zip(norms, runs):
            S = np.mean(r.h1sq ** (k / 2), axis=1)
            flat &= bool(S[second].max() <= spread * S[burn & ~second].max())
            Cs.append(float(S.max()) / math.exp(eta * nrm * nrm))
        ok = flat and max(Cs) <= spread * min(Cs)
        items.append(AprioriItem(f"h1_moment_p{k}", ok, {"C_max": max(Cs), "C_min": min(Cs)}))

    # exponential energy moment
    Cs = []
    for nrm, r in zip(norms, runs):
        E = np.array([math.exp(_log_mean_exp(eta * r.l2sq[k])) for k in range(len(t))])
        Cs.append(float(np.max(E / np.exp(eta * nrm * nrm * np.exp(-p.nu * t / 2)))))
    items.append(AprioriItem("energy_exp_moment", max(Cs) <= spread * min(Cs),
                             {"C_max": max(Cs), "C_min": min(Cs)}))

    # path-wise Jacobian bounds
    def stacked(fn):
        return np.concatenate([fn(r) for r in runs], axis=1)

    I = stacked(lambda r: np.repeat(r.enstrophy_integral[:, :, None], len(probes), axis=2))
    logJ = stacked(lambda r: np.log(r.J / r.xi0))
    J1sq = stacked(lambda r: r.J1**2 / r.xi0**2)
    IJ = stacked(lambda r: r.jacobian_h1_integral / r.xi0**2)
    train = np.arange(I.shape[1]) % 2 == 0
    pos = t > 0

    G = (logJ - eta * I)[pos] / t[pos, None, None]
    c_tr, c_all = float(G[:, train].max()), float(G.max())
    c_hold = float(G[:, ~train].max())
    ok = c_hold <= c_tr + (holdout_slack - 1) * abs(c_tr) + 1e-12
    items.append(AprioriItem("jacobian_growth_pathwise", ok, {"C": c_all, "C_train": c_tr}))

    R = (IJ / np.exp(eta * I))[pos]
    c_tr, c_all = float(R[:, train].max()), float(R.max())
    ok = float(R[:, ~train].max()) <= holdout_slack * c_tr
    items.append(AprioriItem("jacobian_h1_integral_pathwise", ok, {"C": c_all, "C_train": c_tr}))

    L = np.log(J1sq) - eta * I
    c_tr = _min_rate_constant(L[:, train], t)
    c_all = _min_rate_constant(L, t)
    worst = np.max(L[:, ~train] - math.log(holdout_slack * c_tr) - holdout_slack * c_tr * t[:, None, None])
    items.append(AprioriItem("jacobian_h1_pointwise_pathwise", bool(worst <= 0),
                             {"C": c_all, "C_train": c_tr}))
    return AprioriReport(eta, items)
