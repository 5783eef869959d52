"""Acceptance suite at desk scale.  Each test prints one PASS/FAIL line."""

import math

import numpy as np
import pytest

from snsgap import experiments as ex
from snsgap.config import default_config
from snsgap.contraction import (
    EMPTY_SET,
    FiniteKernelCoupling,
    ar1_kernel,
    check_assumption3,
    coupling_ladder_sim,
    doeblin_pipeline,
    doeblin_rate,
    harris_alpha1,
    lazy_cycle_kernel,
    lemma311_radius,
)
from snsgap.fourier import (
    biot_savart,
    bilinear,
    inner,
    interpolation_slack,
    random_field,
    sobolev_norm,
    velocity_norm,
    young_power,
)
from snsgap.transport import EmpiricalMeasure, GroundMetric, max_diagonal_mass, total_variation, w1_exact

from oracles import transport_by_vertices


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def desk():
    return default_config()


def test_antisymmetry(report):
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        u = biot_savart(random_field(16, rng))
        v, w = random_field(16, rng), random_field(16, rng)
        lhs = abs(inner(bilinear(u, v), w) + inner(bilinear(u, w), v))
        worst = max(worst, lhs / (velocity_norm(u, 0) * sobolev_norm(v, 1) * sobolev_norm(w, 0)))
    assert report("antisymmetry", worst <= 1e-10, f"max scaled defect {worst:.2e} (tol 1e-10)")


def test_velocity_norm_identity(report):
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(100):
        w = random_field(16, rng)
        u = biot_savart(w)
        for a in (0.0, 0.5, 1.0):
            ref = sobolev_norm(w, a - 1)
            worst = max(worst, abs(velocity_norm(u, a) - ref) / ref)
    assert report("velocity_norm_identity", worst <= 1e-12, f"max rel defect {worst:.2e} (tol 1e-12)")


EPS = (1e-3, 1e-2, 1.0, 3.0, 10.0)
TRIPLES = ((0.0, 1.0, 2.0), (0.0, 0.5, 1.0), (0.5, 1.0, 2.0))


def _interpolation_worst(power_of):
    rng = np.random.default_rng(103)
    worst = math.inf
    for _ in range(100):
        w = random_field(16, rng)
        for tr in TRIPLES:
            scale = sobolev_norm(w, tr[1]) ** 2
            for eps in EPS:
                worst = min(worst, interpolation_slack(w, *tr, eps, power_of(*tr)) / scale)
    return worst


def test_interpolation_sharp_exponent(report):
    worst = _interpolation_worst(young_power)
    assert report("interpolation_sharp_exponent", worst >= -1e-12,
                  f"min relative slack {worst:.3e}")


@pytest.mark.xfail(strict=True, reason="doubled exponent is too weak for eps > 1")
def test_interpolation_doubled_exponent(report):
    worst = _interpolation_worst(lambda a, b, g: 2 * young_power(a, b, g))
    assert report("interpolation_doubled_exponent", worst >= -1e-12,
                  f"min relative slack {worst:.3e} (violated for eps > 1)")


def test_jacobian_finite_difference(report, desk):
    rep = ex.run_jacobian_fd(desk, T=1.0)
    assert report("jacobian_fd", rep.passed,
                  f"slope {rep.fit.slope:.4f} over eps {rep.eps.max():g}..{rep.eps.min():g}")


def test_scalar_oracle(report):
    res = ex.run_scalar_oracle(1.0, 2.0, 1.0, 0.0, 1.0, n_paths=100_000, h=1e-3,
                               rng=np.random.default_rng(104))
    assert res.rhs == pytest.approx(2 * math.e, rel=1e-15)
    assert report("scalar_oracle", res.passed,
                  f"lhs {res.lhs:.4f} +- {res.se:.4f} vs 2e = {res.rhs:.4f}")


def test_drift_constant_stable(report, desk):
    rep = ex.run_lyapunov_check(desk, times=(0.25, 0.5, 1.0), norms=(0.0, 1.0, 2.0), n_paths=512)
    ceiling = ex.eta_ceiling(desk.forcing, desk.params.nu)
    assert rep.eta == pytest.approx(0.1 * ceiling)
    assert report("drift_constant", rep.stable, f"max spread {rep.spread.max():.4f} (tol 2)")


def test_w1_exact(report):
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(200):
        pts = rng.normal(size=(8, 2))
        metric = GroundMetric(np.linalg.norm(pts[:, None] - pts[None], axis=-1))
        m, n = rng.integers(1, 5, size=2)
        s1 = rng.choice(8, m, replace=False)
        s2 = rng.choice(8, n, replace=False)
        mu1 = EmpiricalMeasure(tuple(int(i) for i in s1), rng.dirichlet(np.ones(m)))
        mu2 = EmpiricalMeasure(tuple(int(i) for i in s2), rng.dirichlet(np.ones(n)))
        got = w1_exact(mu1, mu2, metric).value
        want = transport_by_vertices(mu1.weights, mu2.weights, metric.block(mu1.points, mu2.points))
        worst = max(worst, abs(got - want))
    assert report("w1_exact", worst <= 1e-10, f"max |simplex - enumeration| {worst:.2e}")


def test_diagonal_mass_is_one_minus_tv(report):
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        alpha = rng.choice([0.3, 1.0])
        p, q = rng.dirichlet(np.full(n, alpha)), rng.dirichlet(np.full(n, alpha))
        pts = tuple(range(n))
        got = max_diagonal_mass(EmpiricalMeasure(pts, p), EmpiricalMeasure(pts, q), np.eye(n)).value
        worst = max(worst, abs(got - (1 - total_variation(p, q))))
    assert report("diagonal_mass", worst <= 1e-12, f"max defect {worst:.2e}")


def test_lazy_cycle_end_to_end(report):
    pipe = doeblin_pipeline(lazy_cycle_kernel(), 0.5, 500, np.random.default_rng(107))
    assert pipe.assumption2.holds
    assert report("lazy_cycle_contraction", pipe.report.passes and
                  bool(np.all(pipe.report.ratios <= pipe.alpha + 1e-9)),
                  f"C={pipe.C:.4g} a={pipe.a:.4g} delta={pipe.delta:.4g} alpha={pipe.alpha:.4g} "
                  f"max ratio {pipe.report.max_ratio:.4f} over {len(pipe.report.ratios)} pairs")


def test_coupling_ladder(report):
    # exit frequency on the AR(1) chain, where the gain bound needs C > 0 at alpha1 = 0.3
    k = ar1_kernel()
    pipe = doeblin_pipeline(k, 0.3, 100, np.random.default_rng(108))
    entry = 0.7 * pipe.delta
    x0, y0 = np.argwhere((k.D <= entry) & (k.D > 0))[0]
    exit_rep = coupling_ladder_sim(FiniteKernelCoupling(k, pipe.delta, entry), int(x0), int(y0),
                                   pipe.delta, 0.3, 40, 10_000, np.random.default_rng(109),
                                   check_assumption3(k, entry))
    s1_ok = exit_rep.s1_finite_freq <= pipe.alpha + 3 * exit_rep.s1_se
    # entry-time tails on the lazy cycle started at the far pair
    lazy = lazy_cycle_kernel()
    lp = doeblin_pipeline(lazy, 0.5, 50, np.random.default_rng(110))
    entry = 0.5 * lp.delta
    a = check_assumption3(lazy, entry)
    entry_rep = coupling_ladder_sim(FiniteKernelCoupling(lazy, lp.delta, entry), 0, 2, lp.delta,
                                    0.5, 30, 10_000, np.random.default_rng(111), a)
    r1_ok = entry_rep.r1_within_band()
    excess = float(np.max(entry_rep.r1_tail - entry_rep.r1_bound))
    assert report("coupling_ladder", s1_ok and r1_ok,
                  f"P(s1<inf)={exit_rep.s1_finite_freq:.4f} +- {exit_rep.s1_se:.4f} vs alpha "
                  f"{pipe.alpha:.4f}; r1 tails within band (a={a:.3f}, max excess {excess:.2e})")


def test_gap_linear_regime(report, desk):
    cfg = desk.replace(params=desk.params.replace(nonlinear=False))
    rep = ex.run_gap_estimate(cfg)
    want = cfg.params.nu * 1.0
    ok = rep.status == "ok" and abs(rep.gamma - want) <= 0.1 * want
    assert report("gap_linear", ok, f"gamma_hat {rep.gamma:.4f} vs nu*min|k|^2 = {want}")


@pytest.mark.slow
def test_gap_full_desk(report, desk):
    rep = ex.run_gap_estimate(desk)
    ok = rep.window == (10.0, 50.0) and rep.status == "ok" and rep.gamma > 0 and rep.r2 >= 0.9
    assert report("gap_full", ok, f"gamma_hat {rep.gamma:.4f} +- {rep.gamma_se:.2g}, R^2 {rep.r2:.4f} "
                  f"on t in {rep.window}, {desk.ensemble_size} pairs")


@pytest.mark.slow
def test_galerkin_ladder(report, desk):
    rep = ex.run_galerkin_convergence(desk, ladder=(2, 4, 8, 12), T=1.0, n_pairs=128)
    ok = rep.passed and bool(np.all(np.diff(rep.mean_sq) < 0))
    ratios = ", ".join(f"{r:.3g}" for r in rep.ratios)
    assert report("galerkin_ladder", ok, f"successive ratios {ratios} (need >= 1.5)")


@pytest.mark.slow
def test_generator_consistency(report, desk):
    rep = ex.run_generator_check(desk, hs=(1e-2, 1e-3, 1e-4), n_samples=100_000)
    assert len(rep.names) == 3 and rep.residual.shape[1] == 5
    slopes = ", ".join(f"{s:.3g}" for s in rep.slopes)
    assert report("generator", rep.passed, f"slopes {slopes} (need >= 0.5, monotone)")


@pytest.mark.slow
def test_parameter_continuity(report, desk):
    rep = ex.run_param_continuity(desk, eps=0.05, ladder=(1.0, 0.5, 0.25), t=5.0, n_paths=128)
    slopes = ", ".join(f"{k}={v.slope:.3f}" for k, v in rep.slopes.items())
    assert set(rep.slopes) == {"nu", "q", "fbar"}
    assert report("parameter_continuity", rep.passed, f"slopes {slopes} (need 2 +- 0.3)")


def test_closed_forms(report):
    def close(a, b):
        return abs(a - b) <= 1e-15 * abs(b)

    checks = [
        close(doeblin_rate(0.5, 1.0, 0.6).delta, 0.25),
        close(doeblin_rate(0.5, 1.0, 0.6).alpha, 0.75),
        close(doeblin_rate(0.0, 1.0, 1.0).alpha, 0.5),
        close(harris_alpha1(0.5, 0.1, 10.0), 0.75),
        close(harris_alpha1(1.0, 0.3, 7.0), 1.0),
        abs(harris_alpha1(0.5, 1e-14, 1.0) - 1.0) <= 1e-13,
        lemma311_radius(1.0, 2.0, 0.5, 1.0) is EMPTY_SET,
        close(lemma311_radius(1.0, math.exp(-2), 0.5, 1.0), 3.0),
        close(lemma311_radius(2.5, 2.5, 0.5, 0.3), 2.5),
    ]
    assert report("closed_forms", all(checks), f"{sum(checks)}/{len(checks)} examples exact")
