"""Mean-zero real fields on the 2-torus in truncated Fourier form.

Coefficient convention: ``w(x) = sum_k w_k exp(i k.x)`` over ``k in Z^2 \\ {0}``
with ``|k|_inf <= N``.  Coefficients live in an array of shape
``(2N+1, N+1)`` indexed ``[k1 + N, k2]`` with ``k2 >= 0`` (Hermitian half
plane).  Row ``k2 == 0`` holds both ``+k1`` and ``-k1``, kept conjugate to each
other, and the ``(0, 0)`` entry is always zero.

All operators act on raw coefficient arrays with arbitrary leading batch axes
through :class:`SpectralGrid`; :class:`VorticityField` is the immutable
single-field wrapper used by the public API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

DEFAULT_GRID_FACTOR = 1.5
FFT_WORKERS = 1


def grid_size(cutoff: int, grid_factor: float = DEFAULT_GRID_FACTOR) -> int:
    """Points per axis of the dealiasing grid: ``ceil(grid_factor * (2N+1))``."""
    if Fraction(grid_factor).limit_denominator(10**6) < Fraction(3, 2):
        raise ValueError(f"grid_factor must be >= 3/2 for dealiasing, got {grid_factor}")
    return math.ceil(float(grid_factor) * (2 * cutoff + 1) - 1e-12)


class SpectralGrid:
    """Wavenumber tables and transforms for one (cutoff, grid) pair."""

    def __init__(self, cutoff: int, grid_factor: float = DEFAULT_GRID_FACTOR):
        if cutoff < 1:
            raise ValueError("cutoff must be a positive integer")
        N = int(cutoff)
        self.N = N
        self.grid_factor = grid_factor
        self.M = grid_size(N, grid_factor)
        self.shape = (2 * N + 1, N + 1)

        k1 = np.arange(-N, N + 1, dtype=float)[:, None] * np.ones((1, N + 1))
        k2 = np.ones((2 * N + 1, 1)) * np.arange(0, N + 1, dtype=float)[None, :]
        self.k1 = k1
        self.k2 = k2
        self.ksq = k1**2 + k2**2
        self.inv_ksq = np.zeros_like(self.ksq)
        nz = self.ksq > 0
        self.inv_ksq[nz] = 1.0 / self.ksq[nz]
        # multiplicity of each stored entry in sums over all of Z^2
        self.weight = np.where(k2 > 0, 2.0, 1.0)
        self.weight[N, 0] = 0.0

    # -- layout helpers -------------------------------------------------------

    def canonical(self, c: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto Hermitian, zero-mean coefficient arrays."""
        c = np.array(c, dtype=complex, copy=True)
        row = c[..., :, 0]
        c[..., :, 0] = 0.5 * (row + np.conj(row[..., ::-1]))
        c[..., self.N, 0] = 0.0
        return c

    def zeros(self, *batch: int) -> np.ndarray:
        return np.zeros(batch + self.shape, dtype=complex)

    # -- transforms -----------------------------------------------------------

    def to_physical(self, c: np.ndarray) -> np.ndarray:
        # the column transform only touches the N+1 nonzero k2 columns
        N, M = self.N, self.M
        tmp = np.zeros(c.shape[:-2] + (M, N + 1), dtype=complex)
        tmp[..., : N + 1, :] = c[..., N:, :]
        tmp[..., M - N :, :] = c[..., :N, :]
        tmp = sfft.ifft(tmp, axis=-2, norm="forward", overwrite_x=True, workers=FFT_WORKERS)
        return sfft.irfft(tmp, n=M, axis=-1, norm="forward", workers=FFT_WORKERS)

    def from_physical(self, u: np.ndarray) -> np.ndarray:
        """Forward transform, truncation to ``|k|_inf <= N`` and mean removal."""
        N, M = self.N, self.M
        tmp = sfft.rfft(u, axis=-1, norm="forward", workers=FFT_WORKERS)[..., : N + 1]
        tmp = sfft.fft(tmp, axis=-2, norm="forward", overwrite_x=True, workers=FFT_WORKERS)
        c = np.empty(u.shape[:-2] + self.shape, dtype=complex)
        c[..., N:, :] = tmp[..., : N + 1, :]
        c[..., :N, :] = tmp[..., M - N :, :]
        c[..., N, 0] = 0.0
        return c

    # -- norms ----------------------------------------------------------------

    def norm_sq(self, c: np.ndarray, alpha: float = 0.0) -> np.ndarray:
        if alpha == 0.0:
            w = self.weight
        else:
            w = self.weight * np.where(self.ksq > 0, self.ksq, 1.0) ** alpha
        return np.sum(w * (c.real**2 + c.imag**2), axis=(-2, -1))

    def norm(self, c: np.ndarray, alpha: float = 0.0) -> np.ndarray:
        return np.sqrt(self.norm_sq(c, alpha))

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.sum(self.weight * (a * np.conj(b)).real, axis=(-2, -1))

    # -- operators ------------------------------------------------------------

    def biot_savart(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # k_perp = (-k2, k1); (Kw)_k = -i w_k k_perp / |k|^2
        u1 = 1j * self.k2 * self.inv_ksq * c
        u2 = -1j * self.k1 * self.inv_ksq * c
        return u1, u2

    def advect(self, u1: np.ndarray, u2: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Dealiased ``-(u . grad) w`` for spectral velocity ``u`` and field ``c``."""
        phys = self.to_physical(np.stack([u1, u2, 1j * self.k1 * c, 1j * self.k2 * c]))
        return self.from_physical(-(phys[0] * phys[2] + phys[1] * phys[3]))

    def nonlinear(self, c: np.ndarray) -> np.ndarray:
        """``B(Kw, w)`` for a batch of coefficient arrays."""
        u1, u2 = self.biot_savart(c)
        return self.advect(u1, u2, c)

    def nonlinear_tangent(self, c: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """``B(K xi, w) + B(K w, xi)``: derivative of ``B(Kw, w)`` along ``xi``."""
        c, xi = np.broadcast_arrays(c, xi)
        a1, a2 = self.biot_savart(c)
        b1, b2 = self.biot_savart(xi)
        k1, k2 = self.k1, self.k2
        p = self.to_physical(
            np.stack([a1, a2, b1, b2, 1j * k1 * c, 1j * k2 * c, 1j * k1 * xi, 1j * k2 * xi])
        )
        prod = -(p[2] * p[4] + p[3] * p[5] + p[0] * p[6] + p[1] * p[7])
        return self.from_physical(prod)

    def nonlinear_pair(self, x: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``B(Kx, x)`` and ``B(Ky, y) - B(Kx, x)`` with ``y = x + d``.

        The difference is formed from the bilinear expansion, so it stays
        accurate when ``d`` is many orders of magnitude below ``x``.
        """
        a1, a2 = self.biot_savart(x)
        b1, b2 = self.biot_savart(d)
        k1, k2 = self.k1, self.k2
        p = self.to_physical(
            np.stack([a1, a2, b1, b2, 1j * k1 * x, 1j * k2 * x, 1j * k1 * d, 1j * k2 * d])
        )
        base = -(p[0] * p[4] + p[1] * p[5])
        # B(Kd, x + d) + B(Kx, d)
        diff = -(p[2] * (p[4] + p[6]) + p[3] * (p[5] + p[7]) + p[0] * p[6] + p[1] * p[7])
        out = self.from_physical(np.stack([base, diff]))
        return out[0], out[1]

    def project(self, c: np.ndarray, n: float) -> np.ndarray:
        return np.where(self.ksq <= n * n, c, 0.0)


@lru_cache(maxsize=32)
def grid_for(cutoff: int, grid_factor: float = DEFAULT_GRID_FACTOR) -> SpectralGrid:
    return SpectralGrid(cutoff, grid_factor)


def _cutoff_of(shape: tuple[int, ...]) -> int:
    if len(shape) < 2 or shape[-2] != 2 * (shape[-1] - 1) + 1:
        raise ValueError(f"not a half-plane coefficient layout: {shape}")
    return shape[-1] - 1


def mode_index(cutoff: int, k: tuple[int, int]) -> tuple[int, int, bool]:
    """Storage index of wave vector ``k`` and whether the stored value is conj(w_k)."""
    k1, k2 = int(k[0]), int(k[1])
    if (k1, k2) == (0, 0):
        raise ValueError("the (0,0) mode is not part of a mean-zero field")
    if max(abs(k1), abs(k2)) > cutoff:
        raise ValueError(f"mode {k} exceeds cutoff {cutoff}")
    if k2 > 0 or (k2 == 0 and k1 > 0):
        return k1 + cutoff, k2, False
    return -k1 + cutoff, -k2, True


def canonical_rep(k: tuple[int, int]) -> tuple[int, int]:
    """Representative of ``{k, -k}`` in the half plane ``k2 > 0 or (k2 == 0, k1 > 0)``."""
    k1, k2 = int(k[0]), int(k[1])
    if k2 > 0 or (k2 == 0 and k1 > 0):
        return (k1, k2)
    return (-k1, -k2)


@dataclass(frozen=True, eq=False)
class VorticityField:
    """Immutable real mean-zero scalar field, stored as half-plane coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        N = _cutoff_of(c.shape)
        if c.ndim != 2:
            raise ValueError("VorticityField holds a single field; use arrays for batches")
        c = grid_for(N).canonical(c)
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite Fourier coefficient")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def cutoff(self) -> int:
        return self.coeffs.shape[1] - 1

    @classmethod
    def zeros(cls, cutoff: int) -> "VorticityField":
        return cls(np.zeros((2 * cutoff + 1, cutoff + 1), dtype=complex))

    @classmethod
    def from_modes(cls, cutoff: int, modes: dict) -> "VorticityField":
        """Field with ``w_k = modes[k]`` (and ``w_{-k}`` its conjugate)."""
        c = np.zeros((2 * cutoff + 1, cutoff + 1), dtype=complex)
        seen = set()
        for k, amp in modes.items():
            rep = canonical_rep(k)
            if rep in seen:
                raise ValueError(f"mode {k} given twice (as k and -k)")
            seen.add(rep)
            i, j, conj = mode_index(cutoff, k)
            c[i, j] = np.conj(amp) if conj else amp
            if j == 0:
                c[2 * cutoff - i, 0] = np.conj(c[i, 0])
        return cls(c)

    def coefficient(self, k: tuple[int, int]) -> complex:
        i, j, conj = mode_index(self.cutoff, k)
        v = self.coeffs[i, j]
        return complex(np.conj(v) if conj else v)

    def _wrap(self, c) -> "VorticityField":
        return VorticityField(c)

    def __add__(self, other: "VorticityField") -> "VorticityField":
        return self._wrap(self.coeffs + other.coeffs)

    def __sub__(self, other: "VorticityField") -> "VorticityField":
        return self._wrap(self.coeffs - other.coeffs)

    def __neg__(self) -> "VorticityField":
        return self._wrap(-self.coeffs)

    def __mul__(self, s: float) -> "VorticityField":
        return self._wrap(self.coeffs * s)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"VorticityField(cutoff={self.cutoff}, l2={sobolev_norm(self, 0.0):.6g})"


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Two spectral components in the same half-plane layout as the vorticity."""

    v1: np.ndarray
    v2: np.ndarray

    @property
    def cutoff(self) -> int:
        return self.v1.shape[1] - 1

    def divergence_residual(self) -> float:
        g = grid_for(self.cutoff)
        return float(np.max(np.abs(g.k1 * self.v1 + g.k2 * self.v2), initial=0.0))


def sobolev_norm(w: VorticityField, alpha: float) -> float:
    """``sqrt(sum_k |k|^(2 alpha) |w_k|^2)`` over both half planes."""
    return float(grid_for(w.cutoff).norm(w.coeffs, alpha))


def inner(a: VorticityField, b: VorticityField) -> float:
    """L^2 pairing in coefficient space, ``sum_k Re(a_k conj(b_k))``."""
    return float(grid_for(a.cutoff).inner(a.coeffs, b.coeffs))


def velocity_norm(u: VelocityField, alpha: float) -> float:
    g = grid_for(u.cutoff)
    return float(np.sqrt(g.norm_sq(u.v1, alpha) + g.norm_sq(u.v2, alpha)))


def biot_savart(w: VorticityField) -> VelocityField:
    u1, u2 = grid_for(w.cutoff).biot_savart(w.coeffs)
    return VelocityField(u1, u2)


def curl(u: VelocityField) -> VorticityField:
    g = grid_for(u.cutoff)
    return VorticityField(1j * g.k1 * u.v2 - 1j * g.k2 * u.v1)


def nonlinearity(w: VorticityField, grid_factor: float = DEFAULT_GRID_FACTOR) -> VorticityField:
    """Dealiased ``B(Kw, w) = -(Kw . grad) w``."""
    return VorticityField(grid_for(w.cutoff, grid_factor).nonlinear(w.coeffs))


def bilinear(
    u: VelocityField, w: VorticityField, grid_factor: float = DEFAULT_GRID_FACTOR
) -> VorticityField:
    """Dealiased ``B(u, w) = -(u . grad) w`` for divergence-free ``u``."""
    scale = max(velocity_norm(u, 1.0), 1.0)
    if u.divergence_residual() > 1e-12 * scale:
        raise ValueError("velocity field is not divergence-free")
    g = grid_for(w.cutoff, grid_factor)
    return VorticityField(g.advect(u.v1, u.v2, w.coeffs))


def project(w: VorticityField, n: float) -> VorticityField:
    """Keep the modes with Euclidean ``|k| <= n``."""
    return VorticityField(grid_for(w.cutoff).project(w.coeffs, n))


def to_physical(w: VorticityField, grid_factor: float = DEFAULT_GRID_FACTOR) -> np.ndarray:
    """Samples ``w(x_j)`` on the ``M x M`` grid ``x_j = 2 pi j / M`` (axis 0 is x1)."""
    return grid_for(w.cutoff, grid_factor).to_physical(w.coeffs)


def from_physical(
    samples: np.ndarray,
    cutoff: int,
    grid_factor: float = DEFAULT_GRID_FACTOR,
    mean: str = "project",
) -> VorticityField:
    """Inverse of :func:`to_physical`.

    ``mean="project"`` drops the spatial mean; ``mean="reject"`` raises if it is
    not zero to round-off.
    """
    g = grid_for(cutoff, grid_factor)
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (g.M, g.M):
        raise ValueError(f"expected a {g.M}x{g.M} grid for cutoff {cutoff}, got {samples.shape}")
    if mean == "reject":
        m = samples.mean()
        if abs(m) > 1e-12 * max(1.0, np.abs(samples).max()):
            raise ValueError(f"field has nonzero mean {m}")
    elif mean != "project":
        raise ValueError(f"unknown mean policy {mean!r}")
    return VorticityField(g.from_physical(samples))


def random_coeffs(
    cutoff: int, rng: np.random.Generator, batch: tuple[int, ...] = (), decay: float = 0.0
) -> np.ndarray:
    """Complex Gaussian coefficients with amplitude ``(1 + |k|^2)^(-decay/2)``."""
    g = grid_for(cutoff)
    shape = batch + g.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c *= (1.0 + g.ksq) ** (-decay / 2.0)
    return g.canonical(c)


def random_field(
    cutoff: int, rng: np.random.Generator, decay: float = 0.0, norm: float | None = None
) -> VorticityField:
    c = random_coeffs(cutoff, rng, decay=decay)
    if norm is not None:
        c *= norm / grid_for(cutoff).norm(c)
    return VorticityField(c)


# -- orthonormal real Fourier basis ------------------------------------------
# e_{k,cos} = sqrt(2) cos(k.x), e_{k,sin} = sqrt(2) sin(k.x), one pair per
# half-plane representative k.  The coordinates <w, e> are real.

def basis_coeffs(cutoff: int, k: tuple[int, int], kind: str) -> np.ndarray:
    if kind not in ("cos", "sin"):
        raise ValueError(f"kind must be 'cos' or 'sin', got {kind!r}")
    amp = 1 / math.sqrt(2) if kind == "cos" else -1j / math.sqrt(2)
    return VorticityField.from_modes(cutoff, {k: amp}).coeffs


def basis_field(cutoff: int, k: tuple[int, int], kind: str) -> VorticityField:
    return VorticityField(basis_coeffs(cutoff, k, kind))


def coordinate(c: np.ndarray, k: tuple[int, int], kind: str) -> np.ndarray:
    """``<w, e_{k,kind}>`` for coefficient arrays of any batch shape."""
    N = _cutoff_of(c.shape)
    i, j, conj = mode_index(N, k)
    v = c[..., i, j]
    if kind == "cos":
        return math.sqrt(2) * v.real
    if kind == "sin":
        s = -math.sqrt(2) * v.imag
        return -s if conj else s
    raise ValueError(f"kind must be 'cos' or 'sin', got {kind!r}")


# -- interpolation ------------------------------------------------------------------


def young_power(alpha: float, beta: float, gamma: float) -> float:
    """Sharp termwise exponent ``p`` in ``|w|_b^2 <= eps |w|_a^2 + eps^-p |w|_g^2``."""
    if not alpha < beta < gamma:
        raise ValueError("need alpha < beta < gamma")
    return (gamma - beta) / (beta - alpha)


def interpolation_slack(
    w: VorticityField, alpha: float, beta: float, gamma: float, eps: float, power: float
) -> float:
    """``eps |w|_alpha^2 + eps^-power |w|_gamma^2 - |w|_beta^2`` (nonnegative when the bound holds)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = grid_for(w.cutoff)
    c = w.coeffs
    return float(eps * g.norm_sq(c, alpha) + eps ** (-power) * g.norm_sq(c, gamma) - g.norm_sq(c, beta))
