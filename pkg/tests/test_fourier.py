import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from snsgap.fourier import (
    VelocityField,
    VorticityField,
    basis_field,
    bilinear,
    biot_savart,
    coordinate,
    curl,
    from_physical,
    grid_for,
    grid_size,
    inner,
    interpolation_slack,
    nonlinearity,
    project,
    random_field,
    sobolev_norm,
    to_physical,
    velocity_norm,
    young_power,
)

from conftest import full_spectrum

seeds = st.integers(0, 2**32 - 1)


def brute_force_nonlinearity(w: VorticityField) -> dict:
    """``-(Kw . grad) w`` by direct convolution over all wave-vector pairs."""
    spec = full_spectrum(w.coeffs)
    N = w.cutoff
    out = {}
    for p, wp in spec.items():
        p2 = p[0] ** 2 + p[1] ** 2
        up = (-1j * wp * -p[1] / p2, -1j * wp * p[0] / p2)
        for q, wq in spec.items():
            k = (p[0] + q[0], p[1] + q[1])
            if k == (0, 0) or max(abs(k[0]), abs(k[1])) > N:
                continue
            out[k] = out.get(k, 0) - (up[0] * 1j * q[0] + up[1] * 1j * q[1]) * wq
    return out


# -- norms ------------------------------------------------------------------------


def test_norm_of_zero_field():
    for a in (0.0, 0.5, 1.0, -1.0):
        assert sobolev_norm(VorticityField.zeros(4), a) == 0.0


def test_norm_of_diagonal_pair():
    w = VorticityField.from_modes(4, {(1, 1): 0.5})
    assert sobolev_norm(w, 1.0) == pytest.approx(1.0, rel=1e-15)


def test_l2_norm_matches_physical_rms(rng):
    w = random_field(8, rng)
    rms = math.sqrt(np.mean(to_physical(w) ** 2))
    assert sobolev_norm(w, 0.0) == pytest.approx(rms, rel=1e-10)


# -- Biot-Savart ------------------------------------------------------------------


def test_shear_mode_velocity():
    N = 6
    w = VorticityField.from_modes(N, {(1, 0): 0.5})
    u = biot_savart(w)
    g = grid_for(N)
    x1 = 2 * np.pi * np.arange(g.M) / g.M
    v1, v2 = g.to_physical(u.v1), g.to_physical(u.v2)
    assert np.max(np.abs(v1)) < 1e-14
    np.testing.assert_allclose(v2, np.sin(x1)[:, None] * np.ones(g.M), atol=1e-14)
    assert u.divergence_residual() == 0.0


def test_zero_velocity():
    u = biot_savart(VorticityField.zeros(5))
    assert not np.any(u.v1) and not np.any(u.v2)


@given(seeds)
def test_curl_inverts_biot_savart(seed):
    w = random_field(6, np.random.default_rng(seed))
    back = curl(biot_savart(w))
    np.testing.assert_allclose(back.coeffs, w.coeffs, atol=1e-14)


@given(seeds, st.sampled_from([0.0, 0.5, 1.0]))
def test_velocity_norm_shift(seed, alpha):
    w = random_field(10, np.random.default_rng(seed))
    lhs = velocity_norm(biot_savart(w), alpha)
    rhs = sobolev_norm(w, alpha - 1)
    assert abs(lhs - rhs) <= 1e-12 * rhs


# -- nonlinearity --------------------------------------------------------------------


def test_shear_mode_is_steady():
    w = VorticityField.from_modes(8, {(1, 0): 0.5})
    assert np.max(np.abs(nonlinearity(w).coeffs)) < 1e-15


def test_two_shear_modes_match_convolution():
    w = VorticityField.from_modes(5, {(1, 0): 0.5, (0, 1): 0.5})
    got = full_spectrum(nonlinearity(w).coeffs)
    want = brute_force_nonlinearity(w)
    for k, v in got.items():
        assert abs(v - want.get(k, 0)) < 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_random_field_matches_convolution(seed):
    w = random_field(3, np.random.default_rng(seed))
    got = full_spectrum(nonlinearity(w).coeffs)
    want = brute_force_nonlinearity(w)
    assert set(want) <= set(got)
    scale = sobolev_norm(w, 0) * sobolev_norm(w, 1)
    for k, v in got.items():
        assert abs(v - want.get(k, 0)) < 1e-12 * scale


@given(seeds)
def test_enstrophy_neutral(seed):
    w = random_field(8, np.random.default_rng(seed))
    assert abs(inner(nonlinearity(w), w)) <= 1e-10 * sobolev_norm(w, 0) ** 3


@given(seeds)
def test_transport_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    u = biot_savart(random_field(8, rng))
    v, w = random_field(8, rng), random_field(8, rng)
    lhs = inner(bilinear(u, v), w) + inner(bilinear(u, w), v)
    scale = velocity_norm(u, 0) * sobolev_norm(v, 1) * sobolev_norm(w, 0)
    assert abs(lhs) <= 1e-10 * scale


def test_bilinear_zero_velocity(rng):
    w = random_field(6, rng)
    u = VelocityField(np.zeros_like(w.coeffs), np.zeros_like(w.coeffs))
    assert not np.any(bilinear(u, w).coeffs)


def test_bilinear_rejects_compressible_velocity(rng):
    w = random_field(6, rng)
    u = biot_savart(w)
    bad = VelocityField(u.v1 + w.coeffs, u.v2)
    with pytest.raises(ValueError, match="divergence"):
        bilinear(bad, w)


def test_grid_factor_below_three_halves_rejected():
    with pytest.raises(ValueError):
        grid_size(16, 1.4)
    assert grid_size(16) == 50


def _trilinear_constant(N, rng, samples=40):
    """Largest ``|B(u, v)|_0 / (|u|_1 |v|_1)``: the supremum over ``w`` is taken exactly."""
    low = [(1, 0), (1, 1), (2, 1), (0, 3), (3, -2)]
    pairs = [(basis_field(N, p, "cos"), basis_field(N, q, "sin")) for p in low for q in low]
    pairs += [(random_field(N, rng, decay=2.0), random_field(N, rng, decay=2.0))
              for _ in range(samples)]
    best = 0.0
    for a, v in pairs:
        u = biot_savart(a)
        r = sobolev_norm(bilinear(u, v), 0) / (velocity_norm(u, 1) * sobolev_norm(v, 1))
        best = max(best, r)
    return best


def test_trilinear_constant_stable_across_resolution():
    rng = np.random.default_rng(5)
    c8, c16 = _trilinear_constant(8, rng), _trilinear_constant(16, rng)
    assert 0.5 <= c16 / c8 <= 2.0


# -- projection ---------------------------------------------------------------------


def test_projection_identity_beyond_corners(rng):
    w = random_field(6, rng)
    np.testing.assert_array_equal(project(w, math.sqrt(2) * 6).coeffs, w.coeffs)


def test_projection_at_cutoff_drops_corners():
    w = VorticityField.from_modes(4, {(4, 4): 1.0, (1, 0): 1.0})
    p = project(w, 4)
    assert p.coefficient((4, 4)) == 0 and p.coefficient((1, 0)) == 1


def test_projection_to_zero(rng):
    assert sobolev_norm(project(random_field(6, rng), 0), 0) == 0.0


@given(seeds, st.floats(0.5, 9.0))
def test_projection_contracts_and_tail_bound(seed, n):
    w = random_field(6, np.random.default_rng(seed))
    p = project(w, n)
    assert sobolev_norm(p, 0) <= sobolev_norm(w, 0) * (1 + 1e-15)
    assert sobolev_norm(w - p, -1) <= sobolev_norm(w, 0) / n * (1 + 1e-12)


# -- physical grid --------------------------------------------------------------------


@given(seeds)
def test_physical_round_trip(seed):
    w = random_field(7, np.random.default_rng(seed))
    np.testing.assert_allclose(from_physical(to_physical(w), 7).coeffs, w.coeffs, atol=1e-12)


def test_constant_grid_policy():
    M = grid_size(4)
    ones = np.ones((M, M))
    assert sobolev_norm(from_physical(ones, 4), 0) < 1e-15
    with pytest.raises(ValueError, match="mean"):
        from_physical(ones, 4, mean="reject")
    with pytest.raises(ValueError):
        from_physical(np.zeros((M + 1, M)), 4)


def test_single_mode_samples_cosine():
    N, theta = 5, 0.3
    w = VorticityField.from_modes(N, {(2, -1): 0.5 * np.exp(1j * theta)})
    g = grid_for(N)
    x = 2 * np.pi * np.arange(g.M) / g.M
    want = np.cos(2 * x[:, None] - x[None, :] + theta)
    np.testing.assert_allclose(to_physical(w), want, atol=1e-12)


def test_basis_coordinates_are_orthonormal():
    N = 4
    modes = [((1, 0), "cos"), ((1, 0), "sin"), ((2, -3), "sin"), ((0, 1), "cos")]
    for a in modes:
        e = basis_field(N, *a)
        assert sobolev_norm(e, 0) == pytest.approx(1.0)
        for b in modes:
            assert coordinate(e.coeffs, *b) == pytest.approx(float(a == b), abs=1e-15)


# -- interpolation ------------------------------------------------------------------


@given(
    seeds,
    st.sampled_from([(0.0, 1.0, 2.0), (0.0, 0.5, 1.0), (0.5, 1.0, 2.0), (-1.0, 0.0, 1.0)]),
    st.floats(1e-3, 10.0),
)
def test_interpolation_with_sharp_power(seed, triple, eps):
    w = random_field(8, np.random.default_rng(seed))
    p = young_power(*triple)
    scale = sobolev_norm(w, triple[2]) ** 2
    assert interpolation_slack(w, *triple, eps, p) >= -1e-12 * scale * max(1, eps**-p)


def test_young_power_needs_ordered_indices():
    assert young_power(0, 1, 2) == 1.0
    assert young_power(0.5, 1, 2) == 2.0
    with pytest.raises(ValueError):
        young_power(1, 1, 2)
