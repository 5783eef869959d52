import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import wasserstein_distance

from snsgap.io import read_transport_instance, write_transport_instance
from snsgap.transport import (
    EmpiricalMeasure,
    GroundMetric,
    default_observables,
    ensemble_distance,
    kantorovich_potential,
    max_diagonal_mass,
    total_variation,
    transport_simplex,
    w1_1d,
    w1_dual_lower,
    w1_exact,
)

from oracles import transport_by_vertices

seeds = st.integers(0, 2**32 - 1)


def random_instance(rng, max_atoms=4, pool=7):
    pts = rng.normal(size=(pool, 2))
    metric = GroundMetric(np.linalg.norm(pts[:, None] - pts[None], axis=-1))
    m, n = rng.integers(1, max_atoms + 1, size=2)
    s1 = rng.choice(pool, m, replace=False)
    s2 = rng.choice(pool, n, replace=False)
    mu1 = EmpiricalMeasure(tuple(int(i) for i in s1), rng.dirichlet(np.ones(m)))
    mu2 = EmpiricalMeasure(tuple(int(i) for i in s2), rng.dirichlet(np.ones(n)))
    return mu1, mu2, metric


# -- construction -------------------------------------------------------------------


def test_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure((0, 1), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        EmpiricalMeasure((0, 0), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        EmpiricalMeasure((), np.array([]))


def test_metric_validation():
    with pytest.raises(ValueError):
        GroundMetric(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        GroundMetric(np.array([[1.0, 1.0], [1.0, 0.0]]))
    bad = GroundMetric(np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], float))
    assert bad.triangle_violation() == pytest.approx(3.0)


# -- exact W1 --------------------------------------------------------------------------


def test_diracs():
    metric = GroundMetric.from_function([0.0, 2.5], lambda x, y: abs(x - y))
    value, plan = w1_exact(EmpiricalMeasure.dirac(0.0), EmpiricalMeasure.dirac(2.5), metric)
    assert value == 2.5
    np.testing.assert_array_equal(plan.matrix, [[1.0]])


def test_half_mass_moves():
    metric = GroundMetric.from_function(["a", "b"], lambda x, y: 3.0)
    mu1 = EmpiricalMeasure(("a", "b"), np.array([0.5, 0.5]))
    res = w1_exact(mu1, EmpiricalMeasure.dirac("a"), metric)
    assert res.value == pytest.approx(1.5)
    assert res.plan.marginal_residual(mu1, EmpiricalMeasure.dirac("a")) < 1e-15


@given(seeds)
def test_simplex_matches_vertex_enumeration(seed):
    mu1, mu2, metric = random_instance(np.random.default_rng(seed))
    res = w1_exact(mu1, mu2, metric)
    want = transport_by_vertices(mu1.weights, mu2.weights, metric.block(mu1.points, mu2.points))
    assert abs(res.value - want) <= 1e-10
    assert res.plan.marginal_residual(mu1, mu2) <= 1e-12
    assert np.all(res.plan.matrix >= 0)


def test_zero_weight_atoms_are_ignored():
    metric = GroundMetric.from_function([0.0, 1.0, 4.0], lambda x, y: abs(x - y))
    mu1 = EmpiricalMeasure((0.0, 4.0), np.array([1.0, 0.0]))
    res = w1_exact(mu1, EmpiricalMeasure.dirac(1.0), metric)
    assert res.value == 1.0 and res.plan.matrix.shape == (2, 1)


def test_transport_degenerate_instance():
    # equal partial sums force a degenerate basis
    a = np.array([0.5, 0.5])
    b = np.array([0.5, 0.5])
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert transport_simplex(a, b, C).value == 0.0


# -- dual lower bounds ---------------------------------------------------------------


def test_dual_with_zero_dictionary(rng):
    mu1, mu2, metric = random_instance(rng)
    assert w1_dual_lower(mu1, mu2, metric, [np.zeros(len(metric.points))]) == 0.0


def test_dual_two_points():
    metric = GroundMetric.from_function([0.0, 3.0], lambda x, y: abs(x - y))
    mu1, mu2 = EmpiricalMeasure.dirac(0.0), EmpiricalMeasure.dirac(3.0)
    assert w1_dual_lower(mu1, mu2, metric, [lambda p: abs(p - 0.0)]) == 3.0


@given(seeds)
def test_dual_below_primal_and_tight_at_potential(seed):
    rng = np.random.default_rng(seed)
    mu1, mu2, metric = random_instance(rng)
    res = w1_exact(mu1, mu2, metric)
    junk = [rng.normal(size=len(metric.points)) for _ in range(3)]
    assert w1_dual_lower(mu1, mu2, metric, junk) <= res.value + 1e-12
    pot = kantorovich_potential(res, mu2, metric)
    assert w1_dual_lower(mu1, mu2, metric, [pot]) == pytest.approx(res.value, abs=1e-10)


# -- diagonal mass ---------------------------------------------------------------------


def test_diagonal_mass_of_equal_measures():
    mu = EmpiricalMeasure((0, 1, 2), np.array([0.2, 0.3, 0.5]))
    assert max_diagonal_mass(mu, mu, np.eye(3)).value == pytest.approx(1.0)


def test_diagonal_mass_two_states():
    mu1 = EmpiricalMeasure((0, 1), np.array([0.7, 0.3]))
    mu2 = EmpiricalMeasure((0, 1), np.array([0.4, 0.6]))
    res = max_diagonal_mass(mu1, mu2, np.eye(2))
    assert res.value == pytest.approx(0.7, abs=1e-15)
    assert res.plan.marginal_residual(mu1, mu2) < 1e-15
    assert total_variation(mu1.weights, mu2.weights) == pytest.approx(0.3)


def test_diagonal_mass_extremes(rng):
    mu1, mu2, _ = random_instance(rng)
    shape = (len(mu1.points), len(mu2.points))
    assert max_diagonal_mass(mu1, mu2, np.ones(shape)).value == pytest.approx(1.0)
    assert max_diagonal_mass(mu1, mu2, np.zeros(shape)).value == 0.0
    with pytest.raises(ValueError):
        max_diagonal_mass(mu1, mu2, np.ones((9, 9)))


@given(seeds)
def test_diagonal_mass_matches_zero_one_transport(seed):
    rng = np.random.default_rng(seed)
    mu1, mu2, _ = random_instance(rng)
    close = rng.random((len(mu1.points), len(mu2.points))) < 0.5
    res = max_diagonal_mass(mu1, mu2, close)
    cost = transport_simplex(mu1.weights, mu2.weights, 1.0 - close).value
    assert res.value == pytest.approx(1.0 - cost, abs=1e-12)
    assert res.plan.marginal_residual(mu1, mu2) < 1e-12
    assert float((res.plan.matrix * close).sum()) == pytest.approx(res.value, abs=1e-12)


# -- ensembles ---------------------------------------------------------------------------


def test_identical_ensembles_are_at_zero(rng):
    x = rng.normal(size=(10, 9, 5)) + 1j * rng.normal(size=(10, 9, 5))
    obs = default_observables(4, [(1, 0), (1, 1)])
    for mode in ("w1_observables", "w1_modes", "pairwise_coupled"):
        assert ensemble_distance(x, x.copy(), mode, obs, 0.1).value == 0.0


def test_bound_directions(rng):
    x = rng.normal(size=(4, 9, 5)) + 0j
    obs = default_observables(4, [(1, 0)])
    assert ensemble_distance(x, 2 * x, "w1_observables", obs).direction == "lower"
    assert ensemble_distance(x, 2 * x, "w1_modes").direction == "lower"
    assert ensemble_distance(x, 2 * x, "pairwise_coupled").direction == "upper"
    with pytest.raises(ValueError):
        ensemble_distance(x, x, "sliced")


@given(seeds)
def test_w1_line_order_statistics(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=12), rng.normal(1, 2, size=12)
    assert w1_1d(x, y) == pytest.approx(np.mean(np.abs(np.sort(x) - np.sort(y))))
    wx, wy = rng.dirichlet(np.ones(12)), rng.dirichlet(np.ones(7))
    assert w1_1d(x, y[:7], wx, wy) == pytest.approx(wasserstein_distance(x, y[:7], wx, wy))


@given(seeds)
def test_coupled_upper_dominates_observable_lower(seed):
    from snsgap.fourier import random_coeffs

    rng = np.random.default_rng(seed)
    x = random_coeffs(4, rng, (16,), decay=1.0)
    y = random_coeffs(4, rng, (16,), decay=1.0)
    obs = default_observables(4, [(1, 0), (1, 1)])
    lo = ensemble_distance(x, y, "w1_observables", obs).value
    lo_modes = ensemble_distance(x, y, "w1_modes").value
    hi = ensemble_distance(x, y, "pairwise_coupled", eta=0.05).value
    assert max(lo, lo_modes) <= hi


def test_instance_file_round_trip(tmp_path, rng):
    a, b = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(2))
    C = rng.random((3, 2))
    path = tmp_path / "inst.csv"
    write_transport_instance(path, a, b, C, provenance="# test")
    a2, b2, C2 = read_transport_instance(path)
    np.testing.assert_array_equal(a, a2)
    np.testing.assert_array_equal(C, C2)
    np.testing.assert_array_equal(b, b2)
