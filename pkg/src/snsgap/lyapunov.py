"""Lyapunov weight ``V = exp(eta |w|^2)``, weighted path metrics and observable norms.

The path metric ``rho_r(x, y) = inf over paths of int V^r(gamma) |gamma'|`` has no
closed form.  We bracket it: below by ``|x - y|`` (``V >= 1``), above by the
cheaper of the straight segment and the two-segment path through the origin.
Along either segment ``s -> exp(r eta |gamma(s)|^2)`` is the exponential of a
convex quadratic and hence convex, so trapezoid sums over-estimate and midpoint
sums under-estimate its integral.  Refining only ever lowers the trapezoid
value, which makes the reported upper end a certified bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .fourier import VorticityField, basis_coeffs, coordinate, grid_for


class LyapunovValue(NamedTuple):
    value: float
    log_value: float


def log_lyapunov(w: VorticityField, eta: float) -> float:
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    return eta * float(grid_for(w.cutoff).norm_sq(w.coeffs))


def lyapunov(w: VorticityField, eta: float) -> LyapunovValue:
    """``V(w) = exp(eta |w|^2)``; ``value`` is ``inf`` past float range, ``log_value`` never is."""
    lv = log_lyapunov(w, eta)
    return LyapunovValue(math.exp(lv) if lv < 709.0 else math.inf, lv)


@dataclass(frozen=True)
class WeightedMetricSpec:
    eta: float
    r: float = 1.0
    delta: float = 1.0
    beta: float = 0.1
    kappa: float = 1.0
    r0: float = 0.5

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")
        if not 0 < self.r0 < 1:
            raise ValueError("r0 must lie in (0,1)")
        if not self.r0 <= self.r <= 1:
            raise ValueError("r must lie in [r0, 1]")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0,1)")
        if not self.kappa >= 1:
            raise ValueError("kappa must be >= 1")

    def with_r(self, r: float) -> "WeightedMetricSpec":
        from dataclasses import replace

        return replace(self, r=r)


@dataclass(frozen=True)
class DistanceBracket:
    lower: float
    upper: float
    log_upper: float = -math.inf

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"bracket lower {self.lower} exceeds upper {self.upper}")


def _convex_exp_integral(a: float, b: float, c: float, rtol: float) -> tuple[float, float, float]:
    """Bracket ``int_0^1 exp(a + 2 b s + c s^2) ds`` for ``c >= 0``.

    Returns ``(lo, hi, m)`` with the integral in ``[lo e^m, hi e^m]``.
    """
    m = max(a, a + 2 * b + c)

    def f(s):
        return np.exp(a + 2 * b * s + c * s * s - m)

    lo_pts = np.array([0.0])
    hi_pts = np.array([1.0])
    flo, fhi = f(lo_pts), f(hi_pts)
    for _ in range(200):
        width = hi_pts - lo_pts
        mid = 0.5 * (lo_pts + hi_pts)
        fmid = f(mid)
        trap = 0.5 * width * (flo + fhi)
        midp = width * fmid
        T, Mid = trap.sum(), midp.sum()
        if T - Mid <= rtol * Mid:
            return Mid, T, m
        gap = trap - midp
        split = gap > 0.25 * (T - Mid) / len(gap)
        keep = ~split
        lo_pts = np.concatenate([lo_pts[keep], lo_pts[split], mid[split]])
        hi_pts = np.concatenate([hi_pts[keep], mid[split], hi_pts[split]])
        flo = np.concatenate([flo[keep], flo[split], fmid[split]])
        fhi = np.concatenate([fhi[keep], fmid[split], fhi[split]])
    return Mid, T, m


def _segment_log_cost(x: np.ndarray, y: np.ndarray, lam: float, rtol: float, g) -> tuple[float, float]:
    """Log of certified (lower, upper) for ``int_0^1 exp(lam |x + s(y-x)|^2) |y-x| ds``."""
    d = y - x
    nd = float(g.norm(d))
    if nd == 0.0:
        return -math.inf, -math.inf
    a = lam * float(g.norm_sq(x))
    b = lam * float(g.inner(x, d))
    c = lam * nd * nd
    lo, hi, m = _convex_exp_integral(a, b, c, rtol)
    return math.log(nd) + m + math.log(lo), math.log(nd) + m + math.log(hi)


def _logsumexp2(p: float, q: float) -> float:
    if p == -math.inf:
        return q
    if q == -math.inf:
        return p
    big = max(p, q)
    return big + math.log(math.exp(p - big) + math.exp(q - big))


def _safe_exp(v: float) -> float:
    return math.exp(v) if v < 709.0 else math.inf


def rho_r_bracket(
    x: VorticityField, y: VorticityField, spec: WeightedMetricSpec, rtol: float = 1e-6
) -> DistanceBracket:
    g = grid_for(x.cutoff)
    xc, yc = x.coeffs, y.coeffs
    nd = float(g.norm(yc - xc))
    if nd == 0.0:
        return DistanceBracket(0.0, 0.0, -math.inf)
    lam = spec.r * spec.eta
    if lam == 0.0:
        return DistanceBracket(nd, nd, math.log(nd))
    _, straight = _segment_log_cost(xc, yc, lam, rtol, g)
    zero = np.zeros_like(xc)
    _, via_x = _segment_log_cost(zero, xc, lam, rtol, g)
    _, via_y = _segment_log_cost(zero, yc, lam, rtol, g)
    log_up = min(straight, _logsumexp2(via_x, via_y))
    return DistanceBracket(nd, max(nd, _safe_exp(log_up)), max(math.log(nd), log_up))


def composite_distance(
    x: VorticityField, y: VorticityField, spec: WeightedMetricSpec, rtol: float = 1e-6
) -> DistanceBracket:
    """Bracket of ``min(1, rho_r / delta) + beta rho_1``."""
    br = rho_r_bracket(x, y, spec, rtol)
    b1 = br if spec.r == 1.0 else rho_r_bracket(x, y, spec.with_r(1.0), rtol)
    lo = min(1.0, br.lower / spec.delta) + spec.beta * b1.lower
    first = min(1.0, br.upper / spec.delta)
    hi = first + spec.beta * b1.upper
    log_first = math.log(first) if first > 0 else -math.inf
    log_hi = _logsumexp2(log_first, math.log(spec.beta) + b1.log_upper)
    return DistanceBracket(lo, hi, log_hi)


def log_d_eta_upper(
    xc: np.ndarray, yc: np.ndarray, eta: float, cutoff: int | None = None
) -> np.ndarray:
    """Log of ``|x - y| (exp(eta |x|^2) + exp(eta |y|^2))`` for batches of coefficient arrays."""
    g = grid_for(cutoff if cutoff is not None else xc.shape[-1] - 1)
    nd = g.norm(yc - xc)
    with np.errstate(divide="ignore"):
        return np.log(nd) + np.logaddexp(eta * g.norm_sq(xc), eta * g.norm_sq(yc))


def d_eta_upper(w: VorticityField, w_tilde: VorticityField, eta: float) -> float:
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    lv = float(log_d_eta_upper(w.coeffs, w_tilde.coeffs, eta))
    return _safe_exp(lv) if lv > -math.inf else 0.0


def eq14_constant(kappa: float, eta: float) -> float:
    """``sup_a a exp(-(kappa - 1) eta a^2) = 1 / sqrt(2 e (kappa - 1) eta)``."""
    if kappa <= 1 or eta <= 0:
        raise ValueError("need kappa > 1 and eta > 0")
    return 1.0 / math.sqrt(2 * math.e * (kappa - 1) * eta)


# -- observables ---------------------------------------------------------------


class ObservableError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        self.index = index
        super().__init__(f"observable evaluation failed at sample {index}: {cause}")


@dataclass(frozen=True)
class CylindricalObservable:
    """``phi(w) = f(<w, e_1>, ..., <w, e_m>)`` over real Fourier basis vectors.

    ``modes`` lists ``(k, "cos" | "sin")``.  ``f``, ``grad`` and ``hess`` act on
    coordinate arrays of shape ``(..., m)`` and return shapes ``(...)``,
    ``(..., m)`` and ``(..., m, m)``.
    """

    modes: tuple
    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    hess: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "phi"

    def coords(self, c: np.ndarray) -> np.ndarray:
        return np.stack([coordinate(c, k, kind) for k, kind in self.modes], axis=-1)

    def value(self, c: np.ndarray) -> np.ndarray:
        return self.f(self.coords(c))

    def gradient(self, c: np.ndarray) -> np.ndarray:
        """H-gradient ``D phi(w)`` as coefficient arrays."""
        if self.grad is None:
            raise NotImplementedError
        N = c.shape[-1] - 1
        gz = self.grad(self.coords(c))
        basis = np.stack([basis_coeffs(N, k, kind) for k, kind in self.modes])
        return np.tensordot(gz, basis, axes=([-1], [0]))


def linear_observable(k, kind: str = "cos") -> CylindricalObservable:
    return CylindricalObservable(
        ((tuple(k), kind),),
        lambda z: z[..., 0],
        lambda z: np.ones_like(z),
        lambda z: np.zeros(z.shape + (1,)),
        name=f"{kind}{tuple(k)}",
    )


def constant_observable(value: float = 1.0) -> CylindricalObservable:
    return CylindricalObservable(
        (((1, 0), "cos"),),
        lambda z: np.full(z.shape[:-1], value),
        lambda z: np.zeros_like(z),
        lambda z: np.zeros(z.shape + (1,)),
        name="const",
    )


def fd_gradient(value: Callable[[np.ndarray], float], c: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences along the orthonormal real basis; returns ``D phi`` coefficients."""
    N = c.shape[-1] - 1
    g = grid_for(N)
    out = np.zeros(g.shape, dtype=complex)
    for k1 in range(-N, N + 1):
        for k2 in range(0, N + 1):
            if k2 == 0 and k1 <= 0:
                continue
            for kind in ("cos", "sin"):
                e = basis_coeffs(N, (k1, k2), kind)
                d = (value(c + step * e) - value(c - step * e)) / (2 * step)
                out += d * e
    return out


def _values_and_grad_norms(phi, samples: Sequence[VorticityField]):
    vals, gnorms = [], []
    for i, w in enumerate(samples):
        try:
            if hasattr(phi, "value"):
                v = float(phi.value(w.coeffs))
                try:
                    gr = phi.gradient(w.coeffs)
                except NotImplementedError:
                    gr = fd_gradient(lambda c: float(phi.value(c)), w.coeffs)
            else:
                v = float(phi(w.coeffs))
                gr = fd_gradient(lambda c: float(phi(c)), w.coeffs)
            gn = float(grid_for(w.cutoff).norm(gr))
        except Exception as exc:
            raise ObservableError(i, exc) from exc
        if not (math.isfinite(v) and math.isfinite(gn)):
            raise ObservableError(i, ValueError("non-finite value or gradient"))
        vals.append(abs(v))
        gnorms.append(gn)
    return np.array(vals), np.array(gnorms)


def observable_norm_eta(phi, samples: Sequence[VorticityField], eta: float) -> float:
    """Empirical ``sup_w exp(-eta |w|^2)(|phi(w)| + |D phi(w)|)`` over ``samples``.

    A lower bound on the supremum over the whole space.  ``phi`` is either a
    :class:`CylindricalObservable` or a plain callable on coefficient arrays
    (then the gradient comes from central differences).
    """
    if len(samples) == 0:
        raise ValueError("empty sample set")
    vals, gn = _values_and_grad_norms(phi, samples)
    logw = np.array([-log_lyapunov(w, eta) for w in samples])
    return float(np.max(np.exp(logw) * (vals + gn)))


def observable_norm_vr(phi, samples: Sequence[VorticityField], spec: WeightedMetricSpec) -> float:
    """``sup (|phi| + |D phi|) / V^r``, identical to :func:`observable_norm_eta` at ``r eta``."""
    return observable_norm_eta(phi, samples, spec.r * spec.eta)


def observable_norm_rho_surrogate(
    phi, samples: Sequence[VorticityField], spec: WeightedMetricSpec, reference: Sequence[VorticityField]
) -> float:
    """``sup |D phi| / V^r + |mean of phi over reference|`` on samples."""
    _, gn = _values_and_grad_norms(phi, samples)
    logw = np.array([-log_lyapunov(w, spec.r * spec.eta) for w in samples])
    ref_vals = [float(phi.value(w.coeffs)) for w in reference]
    return float(np.max(np.exp(logw) * gn) + abs(np.mean(ref_vals)))


def default_sample_set(
    cutoff: int, eta: float, rng: np.random.Generator, n: int = 64, decay: float = 2.0
) -> list[VorticityField]:
    """Random fields with norms spread over ``[0, 4 / sqrt(eta)]``."""
    from .fourier import random_field

    top = 4.0 / math.sqrt(eta) if eta > 0 else 4.0
    radii = np.linspace(0.0, top, n)
    return [random_field(cutoff, rng, decay=decay, norm=float(rad)) if rad > 0
            else VorticityField.zeros(cutoff) for rad in radii]
