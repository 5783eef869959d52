"""Exponential Euler-Maruyama integration of the stochastic vorticity equation.

Per mode ``k`` with ``lam = nu |k|^2`` one step of size ``h`` reads

    w_k <- exp(-lam h) w_k + phi1h_k (B(Kw, w)_k + fbar_k) + sigma_k g_k

with ``phi1h = (1 - exp(-lam h)) / lam`` and the exact OU noise factor
``sigma_k = q_k sqrt((1 - exp(-2 lam h)) / (2 lam))``.  Each forced pair
``+-k`` carries two real channels; the complex increment at the half-plane
representative is ``(g_cos - i g_sin) / sqrt(2)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable

import numpy as np

from .fourier import (
    DEFAULT_GRID_FACTOR,
    SpectralGrid,
    VorticityField,
    canonical_rep,
    grid_for,
    mode_index,
)

log = logging.getLogger(__name__)

TangentField = VorticityField


class DivergenceError(RuntimeError):
    def __init__(self, step: int, time: float, trajectories=None):
        self.step = step
        self.time = time
        self.trajectories = trajectories
        msg = f"non-finite state at step {step} (t={time:.6g})"
        if trajectories is not None:
            msg += f", trajectories {list(trajectories)[:8]}"
        super().__init__(msg)


@dataclass(frozen=True)
class ForcingSpec:
    """Forced wave vectors (one per +-k pair), amplitudes and deterministic mean force.

    ``mean_force`` maps wave vectors to the complex coefficient at that vector.
    """

    forced: tuple[tuple[int, int], ...]
    amplitudes: tuple[float, ...]
    mean_force: tuple[tuple[tuple[int, int], complex], ...] = ()

    def __post_init__(self):
        forced = tuple(canonical_rep(k) for k in self.forced)
        amps = tuple(float(q) for q in self.amplitudes)
        if len(forced) != len(amps):
            raise ValueError("one amplitude per forced wave vector is required")
        if len(set(forced)) != len(forced):
            raise ValueError("forced set lists a wave vector twice (as k or -k)")
        for q in amps:
            if not (q > 0 and math.isfinite(q)):
                raise ValueError(f"amplitudes must be positive and finite, got {q}")
        mf = []
        for k, v in dict(self.mean_force).items():
            rep = canonical_rep(k)
            # keep the coefficient at the half-plane representative
            mf.append((rep, complex(v) if rep == tuple(k) else complex(v).conjugate()))
        if len({k for k, _ in mf}) != len(mf):
            raise ValueError("mean force lists a wave vector twice (as k or -k)")
        object.__setattr__(self, "forced", forced)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "mean_force", tuple(mf))

    @classmethod
    def uniform(cls, forced, q: float = 1.0, mean_force=()) -> "ForcingSpec":
        return cls(tuple(forced), tuple(q for _ in forced), tuple(dict(mean_force).items()))

    @property
    def trace_q2(self) -> float:
        """``tr Q^2 = sum over k and -k of q_k^2``."""
        return 2.0 * sum(q * q for q in self.amplitudes)

    @property
    def q_norm(self) -> float:
        return max(self.amplitudes)

    def mean_force_coeffs(self, cutoff: int) -> np.ndarray:
        return VorticityField.from_modes(cutoff, dict(self.mean_force)).coeffs

    def mean_force_norm(self) -> float:
        return math.sqrt(sum(2 * abs(v) ** 2 for _, v in self.mean_force))

    def with_amplitude(self, k, q: float) -> "ForcingSpec":
        rep = canonical_rep(k)
        amps = tuple(q if kk == rep else a for kk, a in zip(self.forced, self.amplitudes))
        return ForcingSpec(self.forced, amps, self.mean_force)

    def with_mean_force(self, mean_force) -> "ForcingSpec":
        return ForcingSpec(self.forced, self.amplitudes, tuple(dict(mean_force).items()))


@dataclass(frozen=True)
class ValidationReport:
    passes: bool
    reasons: tuple[str, ...]


def _lattice_index(vectors) -> int:
    """Index of the lattice spanned by ``vectors`` in Z^2 (0 if rank < 2)."""
    minors = [
        abs(a[0] * b[1] - a[1] * b[0]) for i, a in enumerate(vectors) for b in vectors[i + 1 :]
    ]
    return reduce(math.gcd, minors, 0)


def validate_assumption1(spec: ForcingSpec) -> ValidationReport:
    reasons = []
    if not all(math.isfinite(q) for q in spec.amplitudes) or not spec.forced:
        reasons.append("forced set must be finite and nonempty")
    forced = set(spec.forced)
    outside = [k for k, v in spec.mean_force if v != 0 and k not in forced]
    if outside:
        reasons.append(f"mean force has modes outside the forced set: {outside}")
    vecs = list(spec.forced)
    comp_gcd = reduce(math.gcd, [abs(c) for k in vecs for c in k], 0)
    index = _lattice_index(vecs)
    if index == 0:
        reasons.append("forced set spans a lattice of rank < 2")
    elif index != 1:
        reasons.append(
            f"forced set generates a sublattice of index {index} (component gcd {comp_gcd})"
        )
    moduli = {k[0] ** 2 + k[1] ** 2 for k in vecs}
    if len(moduli) < 2:
        reasons.append("all forced wave vectors have the same modulus")
    return ValidationReport(not reasons, tuple(reasons))


@dataclass(frozen=True)
class SimParams:
    nu: float
    dt: float
    cutoff: int
    horizon: float
    grid_factor: float = DEFAULT_GRID_FACTOR
    seed: int = 0
    nonlinear: bool = True

    def __post_init__(self):
        for name in ("nu", "dt", "horizon"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"cutoff must be a positive integer, got {self.cutoff}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        grid_for(int(self.cutoff), self.grid_factor)  # validates grid_factor
        if self.dt > 0.1 / (self.nu * self.cutoff**2):
            log.debug("dt=%g above the explicit-stability scale 0.1/(nu N^2)", self.dt)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def replace(self, **kw) -> "SimParams":
        from dataclasses import replace

        return replace(self, **kw)


# -- noise ---------------------------------------------------------------------

STEP_BLOCK = 64
TRAJ_BLOCK = 256


class NoiseStream:
    """Standard Gaussians indexed by (trajectory, step, forced mode, channel).

    Values depend only on ``seed`` and the indices: trajectories are grouped in
    blocks of ``TRAJ_BLOCK`` sharing a Philox key, steps in chunks of
    ``STEP_BLOCK`` addressed through the Philox counter.
    """

    def __init__(self, seed: int, n_forced: int):
        self.seed = int(seed)
        self.n_forced = n_forced
        self._keys: dict[int, np.ndarray] = {}
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def _key(self, tb: int) -> np.ndarray:
        if tb not in self._keys:
            ss = np.random.SeedSequence(self.seed, spawn_key=(tb,))
            self._keys[tb] = ss.generate_state(2, np.uint64)
        return self._keys[tb]

    def _block(self, tb: int, chunk: int) -> np.ndarray:
        key = (tb, chunk)
        blk = self._cache.get(key)
        if blk is None:
            if len(self._cache) > 64:
                self._cache = {k: v for k, v in self._cache.items() if k[1] >= chunk}
            bitgen = np.random.Philox(key=self._key(tb), counter=[0, 0, chunk, 0])
            blk = np.random.Generator(bitgen).standard_normal(
                (STEP_BLOCK, TRAJ_BLOCK, self.n_forced, 2)
            )
            self._cache[key] = blk
        return blk

    def gaussians(self, traj_ids: np.ndarray, step: int) -> np.ndarray:
        traj_ids = np.asarray(traj_ids, dtype=np.int64)
        out = np.empty((traj_ids.size, self.n_forced, 2))
        tbs = traj_ids // TRAJ_BLOCK
        chunk, row = divmod(step, STEP_BLOCK)
        for tb in np.unique(tbs):
            sel = tbs == tb
            out[sel] = self._block(int(tb), chunk)[row, traj_ids[sel] % TRAJ_BLOCK]
        return out


@dataclass(frozen=True)
class NoiseIncrement:
    """Standard normals of shape ``(n_forced, 2)``: cosine and sine channel per mode."""

    gaussians: np.ndarray


# -- stepping ------------------------------------------------------------------


class Stepper:
    """Precomputed per-mode factors for one (forcing, parameters, step size)."""

    def __init__(self, spec: ForcingSpec, params: SimParams, dt: float | None = None):
        self.spec = spec
        self.params = params
        self.h = params.dt if dt is None else dt
        self.nonlinear = params.nonlinear
        N = params.cutoff
        g: SpectralGrid = grid_for(N, params.grid_factor)
        self.grid = g
        lam = params.nu * g.ksq
        h = self.h
        self.E = np.exp(-lam * h)
        safe = np.where(lam > 0, lam, 1.0)
        self.phi1h = np.where(lam > 0, -np.expm1(-lam * h) / safe, h)
        self.phi1h[N, 0] = 0.0
        self.fbar_term = self.phi1h * spec.mean_force_coeffs(N)

        idx = [mode_index(N, k) for k in spec.forced]
        self._rows = np.array([i for i, _, _ in idx], dtype=np.intp)
        self._cols = np.array([j for _, j, _ in idx], dtype=np.intp)
        lam_f = lam[self._rows, self._cols]
        q = np.array(spec.amplitudes)
        self.sigma = q * np.sqrt(-np.expm1(-2 * lam_f * h) / (2 * lam_f))
        self._mirror = self._cols == 0
        self._mrows = 2 * N - self._rows[self._mirror]

    def noise_coeffs(self, gauss: np.ndarray) -> np.ndarray:
        """Coefficient-space noise for standard normals of shape ``(..., n_forced, 2)``."""
        gauss = np.asarray(gauss)
        z = self.sigma * (gauss[..., 0] - 1j * gauss[..., 1]) / math.sqrt(2.0)
        out = np.zeros(gauss.shape[:-2] + self.grid.shape, dtype=complex)
        out[..., self._rows, self._cols] = z
        out[..., self._mrows, 0] = np.conj(z[..., self._mirror])
        return out

    def drift(self, c: np.ndarray) -> np.ndarray:
        """Deterministic part of the step map."""
        out = self.E * c + self.fbar_term
        if self.nonlinear:
            out = out + self.phi1h * self.grid.nonlinear(c)
        return out

    def advance(self, c: np.ndarray, gauss: np.ndarray | None = None) -> np.ndarray:
        out = self.drift(c)
        if gauss is not None:
            out += self.noise_coeffs(gauss)
        return out

    def advance_tangent(self, c: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Exact derivative of :meth:`advance` at ``c`` applied to ``xi``."""
        if not self.nonlinear:
            return self.E * xi
        return self.E * xi + self.phi1h * self.grid.nonlinear_tangent(c, xi)

    def advance_pair(self, c: np.ndarray, d: np.ndarray, gauss: np.ndarray | None):
        """Advance ``x = c`` and ``y = c + d`` with common noise; returns ``(x', y' - x')``."""
        if self.nonlinear:
            base, diff = self.grid.nonlinear_pair(c, d)
            x = self.E * c + self.fbar_term + self.phi1h * base
            d = self.E * d + self.phi1h * diff
        else:
            x = self.E * c + self.fbar_term
            d = self.E * d
        if gauss is not None:
            x += self.noise_coeffs(gauss)
        return x, d


def _check_finite(arrs, step: int, t: float, traj_ids=None):
    for a in arrs:
        if not np.all(np.isfinite(a)):
            bad = None
            if traj_ids is not None and a.ndim > 2:
                ok = np.isfinite(a).all(axis=(-2, -1))
                bad = np.asarray(traj_ids)[~ok]
            raise DivergenceError(step, t, bad)


def step(
    w: VorticityField, spec: ForcingSpec, params: SimParams, noise: NoiseIncrement | None = None
) -> VorticityField:
    st = Stepper(spec, params)
    out = st.advance(w.coeffs, None if noise is None else noise.gaussians)
    _check_finite([out], 1, params.dt)
    return VorticityField(out)


def propagate_tangent(
    w: VorticityField, xi: TangentField, spec: ForcingSpec, params: SimParams
) -> TangentField:
    """One-step tangent map at the pre-step state ``w``."""
    st = Stepper(spec, params)
    out = st.advance_tangent(w.coeffs, xi.coeffs)
    _check_finite([out], 1, params.dt)
    return VorticityField(out)


# -- trajectories --------------------------------------------------------------


Observer = Callable[[int, float, np.ndarray], None]


def integrate(
    c0: np.ndarray,
    spec: ForcingSpec,
    params: SimParams,
    n_steps: int | None = None,
    traj_ids=None,
    observer: Observer | None = None,
    stride: int = 1,
    tangents: np.ndarray | None = None,
    noise: bool = True,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Advance a batch ``c0`` of shape ``(B, 2N+1, N+1)``.

    ``observer(n, t, c)`` is called at ``n = 0, stride, 2 stride, ...`` and at the
    final step.  ``tangents`` (shape ``(B, P, 2N+1, N+1)``) are carried along
    with the tangent map.  Trajectory ``b`` draws noise stream ``traj_ids[b]``.
    """
    st = Stepper(spec, params)
    n_steps = params.n_steps if n_steps is None else n_steps
    c = np.array(c0, dtype=complex)
    B = c.shape[0]
    traj_ids = np.arange(B) if traj_ids is None else np.asarray(traj_ids)
    ns = NoiseStream(params.seed, len(spec.forced))
    xi = None if tangents is None else np.array(tangents, dtype=complex)
    if observer is not None:
        observer(0, 0.0, c) if xi is None else observer(0, 0.0, (c, xi))
    for n in range(n_steps):
        if xi is not None:
            xi = st.advance_tangent(c[:, None], xi)
        gauss = ns.gaussians(traj_ids, n) if noise else None
        c = st.advance(c, gauss)
        t = (n + 1) * st.h
        _check_finite([c] if xi is None else [c, xi], n + 1, t, traj_ids)
        if observer is not None and ((n + 1) % stride == 0 or n + 1 == n_steps):
            observer(n + 1, t, c) if xi is None else observer(n + 1, t, (c, xi))
    return c, xi


def integrate_pairs(
    x0: np.ndarray,
    y0: np.ndarray,
    spec: ForcingSpec,
    params: SimParams,
    n_steps: int | None = None,
    traj_ids=None,
    observer: Callable[[int, float, np.ndarray, np.ndarray], None] | None = None,
    stride: int = 1,
    spec_y: ForcingSpec | None = None,
    params_y: SimParams | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Synchronously coupled pairs; returns ``(x_T, y_T - x_T)``.

    The difference is integrated directly so it stays accurate far below the
    round-off level of ``x``.  When ``spec_y``/``params_y`` differ from the base
    parameters the two copies are stepped separately with the same Gaussians.
    """
    n_steps = params.n_steps if n_steps is None else n_steps
    x = np.array(x0, dtype=complex)
    d = np.array(y0, dtype=complex) - x
    B = x.shape[0]
    traj_ids = np.arange(B) if traj_ids is None else np.asarray(traj_ids)
    ns = NoiseStream(params.seed, len(spec.forced))
    st = Stepper(spec, params)
    split = (spec_y is not None and spec_y != spec) or (params_y is not None and params_y != params)
    if split:
        sy = Stepper(spec_y or spec, params_y or params)
        if sy.h != st.h or len(sy.sigma) != len(st.sigma):
            raise ValueError("coupled copies need the same step size and forced set")
        y = x + d
    if observer is not None:
        observer(0, 0.0, x, d)
    for n in range(n_steps):
        gauss = ns.gaussians(traj_ids, n)
        if split:
            x = st.advance(x, gauss)
            y = sy.advance(y, gauss)
            d = y - x
        else:
            x, d = st.advance_pair(x, d, gauss)
        t = (n + 1) * st.h
        _check_finite([x, d], n + 1, t, traj_ids)
        if observer is not None and ((n + 1) % stride == 0 or n + 1 == n_steps):
            observer(n + 1, t, x, d)
    return x, d


@dataclass
class TrajectoryRecord:
    t: np.ndarray
    l2_norm: np.ndarray
    h1_norm: np.ndarray
    snapshots: list = field(default_factory=list)
    pair_distance: np.ndarray | None = None
    d_eta_upper: np.ndarray | None = None

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"t": self.t, "l2_norm": self.l2_norm, "h1_norm": self.h1_norm}
        if self.pair_distance is not None:
            cols["pair_distance"] = self.pair_distance
            cols["d_eta_upper"] = self.d_eta_upper
        return cols


@dataclass(frozen=True)
class Recorder:
    stride: int = 1
    snapshots: bool = False


def simulate(
    w0: VorticityField,
    spec: ForcingSpec,
    params: SimParams,
    recorder: Recorder = Recorder(),
    traj_index: int = 0,
) -> TrajectoryRecord:
    g = grid_for(params.cutoff)
    rows: list = []
    snaps: list = []

    def obs(n, t, c):
        rows.append((t, float(g.norm(c[0])), float(g.norm(c[0], 1.0))))
        if recorder.snapshots:
            snaps.append(VorticityField(c[0]))

    integrate(w0.coeffs[None], spec, params, traj_ids=[traj_index], observer=obs,
              stride=recorder.stride)
    a = np.array(rows)
    return TrajectoryRecord(a[:, 0], a[:, 1], a[:, 2], snaps)


def simulate_pair(
    x0: VorticityField,
    y0: VorticityField,
    spec: ForcingSpec,
    params: SimParams,
    recorder: Recorder = Recorder(),
    eta: float = 0.0,
    traj_index: int = 0,
) -> TrajectoryRecord:
    """Synchronous coupling of two copies; norms are those of the ``x`` copy."""
    g = grid_for(params.cutoff)
    rows: list = []

    def obs(n, t, x, d):
        nx, nd = float(g.norm(x[0])), float(g.norm(d[0]))
        ny = float(g.norm(x[0] + d[0]))
        deta = nd * (math.exp(eta * nx * nx) + math.exp(eta * ny * ny))
        rows.append((t, nx, float(g.norm(x[0], 1.0)), nd, deta))

    integrate_pairs(x0.coeffs[None], y0.coeffs[None], spec, params, traj_ids=[traj_index],
                    observer=obs, stride=recorder.stride)
    a = np.array(rows)
    return TrajectoryRecord(a[:, 0], a[:, 1], a[:, 2], [], a[:, 3], a[:, 4])
