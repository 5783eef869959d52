"""Exact discrete optimal transport for Wasserstein-1 style costs.

The primal solver is a transportation (network) simplex: northwest-corner
start, potentials from the spanning tree, most negative reduced cost enters,
ratio test along the tree cycle.  After a run of degenerate pivots it falls
back to Bland's smallest-index rule, which cannot cycle.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, NamedTuple, Sequence

import numpy as np

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    points: tuple
    weights: np.ndarray

    def __post_init__(self):
        pts = tuple(self.points)
        w = np.asarray(self.weights, dtype=float).copy()
        if len(pts) == 0:
            raise ValueError("empty support")
        if w.shape != (len(pts),):
            raise ValueError("one weight per point is required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if len(set(pts)) != len(pts):
            raise ValueError("repeated support point")
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points: Sequence) -> "EmpiricalMeasure":
        n = len(points)
        return cls(tuple(points), np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, point) -> "EmpiricalMeasure":
        return cls((point,), np.ones(1))

    @classmethod
    def from_vector(cls, p: np.ndarray, points: Sequence | None = None) -> "EmpiricalMeasure":
        """Measure on ``points`` (default ``0..n-1``) with weights ``p``; renormalizes round-off."""
        p = np.asarray(p, dtype=float)
        pts = tuple(range(len(p))) if points is None else tuple(points)
        return cls(pts, p / p.sum())


@dataclass(frozen=True, eq=False)
class GroundMetric:
    """Symmetric nonnegative cost with zero diagonal over ``points``."""

    matrix: np.ndarray
    points: tuple = ()

    def __post_init__(self):
        C = np.asarray(self.matrix, dtype=float).copy()
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("cost matrix must be square")
        if not np.all(np.isfinite(C)) or np.any(C < 0):
            raise ValueError("cost must be finite and nonnegative")
        if np.any(np.diag(C) != 0):
            raise ValueError("cost must vanish on the diagonal")
        if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, C.max())):
            raise ValueError("cost must be symmetric")
        pts = tuple(self.points) if self.points else tuple(range(C.shape[0]))
        if len(pts) != C.shape[0]:
            raise ValueError("one point per row of the cost matrix is required")
        C.flags.writeable = False
        object.__setattr__(self, "matrix", C)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_index", {p: i for i, p in enumerate(pts)})

    @classmethod
    def from_function(cls, points: Sequence, dist: Callable) -> "GroundMetric":
        n = len(points)
        C = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                C[i, j] = C[j, i] = dist(points[i], points[j])
        return cls(C, tuple(points))

    def indices(self, pts: Sequence) -> np.ndarray:
        return np.array([self._index[p] for p in pts], dtype=np.intp)

    def block(self, rows: Sequence, cols: Sequence) -> np.ndarray:
        return self.matrix[np.ix_(self.indices(rows), self.indices(cols))]

    def shortest_paths(self) -> np.ndarray:
        """Floyd-Warshall closure: the largest metric below the cost."""
        D = self.matrix.copy()
        for k in range(D.shape[0]):
            D = np.minimum(D, D[:, k : k + 1] + D[k : k + 1, :])
        return D

    def triangle_violation(self) -> float:
        """``max(C - closure)``; zero iff the cost is a metric."""
        return float(np.max(self.matrix - self.shortest_paths()))


@dataclass(frozen=True, eq=False)
class CouplingPlan:
    matrix: np.ndarray
    rows: tuple
    cols: tuple

    def marginal_residual(self, mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> float:
        return float(
            max(
                np.max(np.abs(self.matrix.sum(axis=1) - mu1.weights)),
                np.max(np.abs(self.matrix.sum(axis=0) - mu2.weights)),
            )
        )


@dataclass(frozen=True, eq=False)
class TransportSolution:
    value: float
    plan: np.ndarray
    u: np.ndarray
    v: np.ndarray
    iterations: int


class SimplexError(RuntimeError):
    pass


def _northwest_corner(a: np.ndarray, b: np.ndarray):
    m, n = len(a), len(b)
    ar, br = a.copy(), b.copy()
    flow = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        x = min(ar[i], br[j])
        flow[i, j] = x
        basis.append((i, j))
        ar[i] -= x
        br[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and ar[i] <= br[j]):
            i += 1
        else:
            j += 1
    return flow, basis


def _potentials(C: np.ndarray, basis, m: int, n: int):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        p = queue.popleft()
        for q in adj[p]:
            if np.isnan(pot[q]):
                # u_i + v_j = C_ij on basic cells
                pot[q] = C[p, q - m] - pot[p] if p < m else C[q, p - m] - pot[p]
                queue.append(q)
    return pot[:m], pot[m:], adj


def _tree_path(adj, m: int, start: int, goal: int) -> list[int]:
    """Node path from ``start`` to ``goal`` in the basis tree."""
    parent = {start: None}
    queue = deque([start])
    while queue:
        p = queue.popleft()
        if p == goal:
            break
        for q in adj[p]:
            if q not in parent:
                parent[q] = p
                queue.append(q)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def transport_simplex(
    a: np.ndarray, b: np.ndarray, C: np.ndarray, max_iter: int | None = None
) -> TransportSolution:
    """Minimize ``<C, P>`` over couplings of ``a`` (rows) and ``b`` (columns)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = len(a), len(b)
    if C.shape != (m, n):
        raise ValueError("cost shape does not match the marginals")
    b = b * (a.sum() / b.sum())
    flow, basis = _northwest_corner(a, b)
    scale = max(1.0, float(np.abs(C).max()))
    tol = 1e-12 * scale
    max_iter = max_iter or 50 * (m + n) ** 2 + 100
    degenerate_run = 0
    it = 0
    while True:
        u, v, adj = _potentials(C, basis, m, n)
        R = C - u[:, None] - v[None, :]
        if degenerate_run > m + n:
            neg = np.flatnonzero(R.ravel() < -tol)
            enter = int(neg[0]) if neg.size else -1
        else:
            enter = int(np.argmin(R))
            if R.flat[enter] >= -tol:
                enter = -1
        if enter < 0:
            break
        it += 1
        if it > max_iter:
            raise SimplexError(f"no convergence after {max_iter} pivots")
        ei, ej = divmod(enter, n)
        # cycle: entering cell, then the tree path from column ej back to row ei
        nodes = _tree_path(adj, m, m + ej, ei)
        cells = []
        for p, q in zip(nodes[:-1], nodes[1:]):
            cells.append((p, q - m) if p < m else (q, p - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        cand = [c for c in minus if flow[c] <= theta]
        leave = min(cand) if degenerate_run > m + n else cand[0]
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ei, ej] += theta
        flow[leave] = 0.0
        basis.remove(leave)
        basis.append((ei, ej))
        degenerate_run = degenerate_run + 1 if theta == 0 else 0
    flow = np.maximum(flow, 0.0)
    return TransportSolution(float(np.sum(C * flow)), flow, u, v, it)


class W1Result:
    """Unpacks as ``(value, plan)``; also carries duals and the pivot count."""

    def __init__(self, value, plan, u, v, iterations):
        self.value = value
        self.plan = plan
        self.u = u
        self.v = v
        self.iterations = iterations

    def __iter__(self):
        return iter((self.value, self.plan))


def _drop_empty(mu: EmpiricalMeasure):
    keep = mu.weights > 0
    return tuple(p for p, k in zip(mu.points, keep) if k), mu.weights[keep], keep


def w1_exact(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure, metric: GroundMetric) -> W1Result:
    """Optimal transport value and plan for the ground cost."""
    p1, a, k1 = _drop_empty(mu1)
    p2, b, k2 = _drop_empty(mu2)
    C = metric.block(p1, p2)
    sol = transport_simplex(a, b, C)
    full = np.zeros((len(mu1.points), len(mu2.points)))
    full[np.ix_(k1, k2)] = sol.plan
    u = np.full(len(mu1.points), np.nan)
    v = np.full(len(mu2.points), np.nan)
    u[k1], v[k2] = sol.u, sol.v
    plan = CouplingPlan(full, mu1.points, mu2.points)
    return W1Result(sol.value, plan, u, v, sol.iterations)


def lipschitz_envelope(phi: np.ndarray, metric: GroundMetric, D: np.ndarray | None = None) -> np.ndarray:
    """Largest function below ``phi`` that is 1-Lipschitz for the shortest-path closure."""
    D = metric.shortest_paths() if D is None else D
    return np.min(phi[None, :] + D, axis=1)


def w1_dual_lower(
    mu1: EmpiricalMeasure, mu2: EmpiricalMeasure, metric: GroundMetric, dictionary: Sequence
) -> float:
    """``max |mu1 phi - mu2 phi|`` over 1-Lipschitz envelopes of the candidates.

    Candidates are arrays over ``metric.points`` or callables on a point.
    """
    D = metric.shortest_paths()
    i1, i2 = metric.indices(mu1.points), metric.indices(mu2.points)
    best = 0.0
    for cand in dictionary:
        phi = np.array(
            [cand(p) for p in metric.points] if callable(cand) else cand, dtype=float
        )
        for sgn in (1.0, -1.0):
            env = lipschitz_envelope(sgn * phi, metric, D)
            best = max(best, abs(float(mu1.weights @ env[i1] - mu2.weights @ env[i2])))
    return best


def kantorovich_potential(result: W1Result, mu2: EmpiricalMeasure, metric: GroundMetric) -> np.ndarray:
    """Potential over ``metric.points`` built from the column duals: ``min_j d(z, y_j) - v_j``."""
    D = metric.shortest_paths()
    keep = ~np.isnan(result.v)
    cols = metric.indices([p for p, k in zip(mu2.points, keep) if k])
    return np.min(D[:, cols] - result.v[keep][None, :], axis=1)


# -- maximal mass on a closeness relation ---------------------------------------


def _max_flow(a: np.ndarray, b: np.ndarray, close: np.ndarray) -> np.ndarray:
    """Edmonds-Karp on source -> rows -> close columns -> sink; returns the row/column flow."""
    m, n = close.shape
    F = np.zeros((m, n))
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    eps = 1e-15
    while True:
        # BFS over rows/columns in the residual graph
        prev_row = np.full(n, -1)
        prev_col = np.full(m, -1)
        seen_r = ra > eps
        seen_c = np.zeros(n, dtype=bool)
        frontier = list(np.flatnonzero(seen_r))
        target = -1
        while frontier and target < 0:
            nxt = []
            for i in frontier:
                for j in np.flatnonzero(close[i] & ~seen_c):
                    seen_c[j] = True
                    prev_row[j] = i
                    if rb[j] > eps:
                        target = j
                        break
                    for i2 in np.flatnonzero((F[:, j] > eps) & ~seen_r):
                        seen_r[i2] = True
                        prev_col[i2] = j
                        nxt.append(i2)
                if target >= 0:
                    break
            frontier = nxt
        if target < 0:
            return F
        # walk back collecting forward (row, col) and backward (row, col) edges
        fwd, bwd = [], []
        j = target
        while True:
            i = prev_row[j]
            fwd.append((i, j))
            if prev_col[i] < 0:
                src = i
                break
            j2 = prev_col[i]
            bwd.append((i, j2))
            j = j2
        aug = min([ra[src], rb[target]] + [F[e] for e in bwd])
        for e in fwd:
            F[e] += aug
        for e in bwd:
            F[e] -= aug
        ra[src] -= aug
        rb[target] -= aug


class DiagonalMassResult(NamedTuple):
    value: float
    plan: CouplingPlan


def max_diagonal_mass(
    mu1: EmpiricalMeasure, mu2: EmpiricalMeasure, closeness: np.ndarray
) -> DiagonalMassResult:
    """Largest mass a coupling can put on the close pairs, with an attaining plan."""
    close = np.asarray(closeness).astype(bool)
    if close.shape != (len(mu1.points), len(mu2.points)):
        raise ValueError("closeness must be a support1 x support2 0/1 matrix")
    F = _max_flow(mu1.weights, mu2.weights, close)
    value = float(F.sum())
    ra = np.maximum(mu1.weights - F.sum(axis=1), 0.0)
    rb = np.maximum(mu2.weights - F.sum(axis=0), 0.0)
    rest = ra.sum()
    plan = F + (np.outer(ra, rb) / rest if rest > 0 else 0.0)
    return DiagonalMassResult(min(value, 1.0), CouplingPlan(plan, mu1.points, mu2.points))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# -- ensembles -------------------------------------------------------------------


class Bound(NamedTuple):
    value: float
    direction: str  # "upper", "lower" or "exact"


def w1_1d(x: np.ndarray, y: np.ndarray, wx: np.ndarray | None = None, wy: np.ndarray | None = None) -> float:
    """Exact W1 on the line: ``int |F - G|``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if wx is None and wy is None and len(x) == len(y):
        return float(np.mean(np.abs(np.sort(x) - np.sort(y))))
    wx = np.full(len(x), 1.0 / len(x)) if wx is None else np.asarray(wx, float)
    wy = np.full(len(y), 1.0 / len(y)) if wy is None else np.asarray(wy, float)
    pts = np.concatenate([x, y])
    mass = np.concatenate([wx, -wy])
    order = np.argsort(pts, kind="stable")
    cdf = np.cumsum(mass[order])[:-1]
    return float(np.sum(np.abs(cdf) * np.diff(pts[order])))


@dataclass(frozen=True)
class LipschitzObservable:
    """Real functional on coefficient batches with a known Lipschitz constant in ``H``."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz: float


def default_observables(
    cutoff: int, forced: Sequence, clip: float = 2.0, shells: Sequence[float] = (0.5, 1.0, 2.0, 4.0)
) -> list[LipschitzObservable]:
    """Coordinates on forced and neighbouring modes, clipped squares, smoothed energy shells."""
    from .fourier import canonical_rep, coordinate, grid_for

    modes = set()
    for k in forced:
        for d1 in (-1, 0, 1):
            for d2 in (-1, 0, 1):
                kk = (k[0] + d1, k[1] + d2)
                if kk != (0, 0) and max(abs(kk[0]), abs(kk[1])) <= cutoff:
                    modes.add(canonical_rep(kk))
    obs: list[LipschitzObservable] = []
    for k in sorted(modes):
        for kind in ("cos", "sin"):
            obs.append(LipschitzObservable(
                f"{kind}{k}", lambda c, k=k, kind=kind: coordinate(c, k, kind), 1.0))
    for k in sorted(forced):
        for kind in ("cos", "sin"):
            obs.append(LipschitzObservable(
                f"{kind}{tuple(k)}^2",
                lambda c, k=k, kind=kind: np.clip(coordinate(c, k, kind), -clip, clip) ** 2,
                2.0 * clip,
            ))
    g = grid_for(cutoff)
    width = 0.5
    for r in shells:
        obs.append(LipschitzObservable(
            f"shell{r}", lambda c, r=r: np.clip((g.norm(c) - r) / width, 0.0, 1.0), 1.0 / width))
    return obs


def ensemble_distance(
    xa: np.ndarray,
    xb: np.ndarray,
    mode: str,
    observables: Sequence[LipschitzObservable] | None = None,
    eta: float = 0.0,
) -> Bound:
    """Distance surrogate between two equal-size ensembles of coefficient arrays."""
    from .fourier import grid_for
    from .lyapunov import log_d_eta_upper

    if xa.shape != xb.shape:
        raise ValueError(f"ensemble shapes differ: {xa.shape} vs {xb.shape}")
    if mode == "w1_observables":
        if observables is None:
            raise ValueError("w1_observables needs a dictionary")
        best = 0.0
        for ob in observables:
            best = max(best, w1_1d(ob.fn(xa), ob.fn(xb)) / ob.lipschitz)
        return Bound(best, "lower")
    if mode == "w1_modes":
        g = grid_for(xa.shape[-1] - 1)
        # one cos and one sin coordinate per half-plane representative
        reps = (g.k2 > 0) | ((g.k2 == 0) & (g.k1 > 0))
        best = 0.0
        for part in ("real", "imag"):
            A = math.sqrt(2.0) * getattr(xa[:, reps], part)
            Bm = math.sqrt(2.0) * getattr(xb[:, reps], part)
            for col in range(A.shape[1]):
                best = max(best, w1_1d(A[:, col], Bm[:, col]))
        return Bound(best, "lower")
    if mode == "pairwise_coupled":
        vals = np.exp(log_d_eta_upper(xa, xb, eta))
        return Bound(float(np.mean(vals)), "upper")
    raise ValueError(f"unknown mode {mode!r}")


def ensemble_distance_series(
    series_a: Sequence[np.ndarray],
    series_b: Sequence[np.ndarray],
    mode: str,
    observables: Sequence[LipschitzObservable] | None = None,
    eta: float = 0.0,
) -> list[Bound]:
    if len(series_a) != len(series_b):
        raise ValueError("series lengths differ")
    return [ensemble_distance(a, b, mode, observables, eta) for a, b in zip(series_a, series_b)]
