"""Command-line entry point.

Exit codes: 0 success, 2 configuration or usage error, 3 divergence,
4 an experiment's pass rule failed.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ConfigError, ExperimentConfig, default_config, load_config
from .contraction import (
    FiniteKernelCoupling,
    check_assumption3,
    coupling_ladder_sim,
    doeblin_pipeline,
    harris_alpha1,
)
from .fourier import VorticityField
from .integrator import DivergenceError, Recorder, simulate, simulate_pair, validate_assumption1
from .io import provenance_line, read_kernel_csv, write_csv, write_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_FAILED = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: error: {message}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _points(text: str):
    """``"x1,x2,comp;..."``."""
    pts, comps = [], []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        x1, x2, c = item.split(",")
        pts.append((float(x1), float(x2)))
        comps.append(int(c))
    return pts, comps


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")

    parser = _Parser(prog="snsgap", parents=[common],
                     description="Spectral-gap experiments for stochastic 2D Navier-Stokes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("simulate", parents=[common], help="single trajectory record")
    sub.add_parser("pair", parents=[common], help="synchronously coupled pair record")
    p = sub.add_parser("gap", parents=[common], help="coupled-ensemble gap estimate")
    p.add_argument("--fit-window", type=_floats, help="t0,t1 for the log-linear fit")
    p = sub.add_parser("lyapunov", parents=[common], help="exponential drift bound")
    p.add_argument("--paths", type=int, default=512)
    p.add_argument("--eta", type=float)
    p.add_argument("--scalar-paths", type=int, default=100_000)
    p = sub.add_parser("structure", parents=[common], help="velocity structure functions")
    p.add_argument("--points", default="0.5,1.0,1;0.5,1.0,1", help="x1,x2,component;...")
    p.add_argument("--reference-horizon", type=float, default=200.0)
    p.add_argument("--reference-chains", type=int, default=1)
    p = sub.add_parser("params", parents=[common], help="parameter continuity ladder")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--kinds", default="nu,q,fbar")
    p.add_argument("--paths", type=int, default=128)
    p.add_argument("--time", type=float, default=5.0)
    p.add_argument("--invariant-horizon", type=float)
    p = sub.add_parser("jacobian", parents=[common], help="finite differences against the tangent flow")
    p.add_argument("--eps", type=_floats, default=(1e-2, 1e-3, 1e-4, 1e-5))
    p.add_argument("--time", type=float, default=1.0)
    p = sub.add_parser("galerkin", parents=[common], help="Galerkin truncation ladder")
    p.add_argument("--ladder", type=_ints, default=(2, 4, 8, 12))
    p.add_argument("--pairs", type=int, default=128)
    p.add_argument("--time", type=float, default=1.0)
    p = sub.add_parser("generator", parents=[common], help="one-step generator residuals")
    p.add_argument("--samples", type=int, default=100_000)
    p = sub.add_parser("apriori", parents=[common], help="a-priori path bounds")
    p.add_argument("--paths", type=int, default=64)
    p.add_argument("--horizon", type=float, default=4.0)
    p = sub.add_parser("doeblin", parents=[common], help="finite-kernel contraction pipeline")
    p.add_argument("--kernel", type=Path, required=True)
    p.add_argument("--alpha1", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--ladder-horizon", type=int, default=40)
    p = sub.add_parser("harris", parents=[common], help="closed-form alpha1 from drift constants")
    p.add_argument("--alpha-star", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--k-star", type=float, required=True)
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config, str(args.out)) if args.config else default_config(str(args.out))
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
        cfg = cfg.with_seed(args.seed)
    return cfg


class _Run:
    def __init__(self, args, cfg: ExperimentConfig | None):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        if cfg is not None:
            self.prov = provenance_line(cfg.hash(), cfg.params.seed)
        else:
            self.prov = provenance_line("-", args.seed if args.seed is not None else "-")

    def csv(self, name: str, header, rows) -> Path:
        path = self.out / name
        write_csv(path, header, rows, self.prov)
        return path

    def say(self, text: str) -> None:
        if not self.args.quiet:
            print(text)


def _cmd_simulate(run: _Run) -> bool:
    cfg = run.cfg
    w0 = ex.field_from_modes(cfg.params.cutoff, cfg.x0)
    rec = simulate(w0, cfg.forcing, cfg.params, Recorder(cfg.record_stride, snapshots=True))
    cols = rec.columns()
    run.csv("trajectory.csv", list(cols), list(zip(*cols.values())))
    write_snapshot(run.out / "final.vort", rec.snapshots[-1])
    run.say(f"simulate: {len(rec.t)} records, final |w| = {rec.l2_norm[-1]:.6g}")
    return True


def _cmd_pair(run: _Run) -> bool:
    cfg = run.cfg
    N = cfg.params.cutoff
    x0, y0 = ex.field_from_modes(N, cfg.x0), ex.field_from_modes(N, cfg.y0)
    rec = simulate_pair(x0, y0, cfg.forcing, cfg.params, Recorder(cfg.record_stride), cfg.metric.eta)
    cols = rec.columns()
    run.csv("pair.csv", list(cols), list(zip(*cols.values())))
    run.say(f"pair: final |x - y| = {rec.pair_distance[-1]:.6g} (coupled, upper)")
    return True


def _cmd_gap(run: _Run) -> bool:
    rep = ex.run_gap_estimate(run.cfg, fit_window=run.args.fit_window)
    run.csv("gap_series.csv", *rep.table())
    run.csv("gap_fit.csv", *rep.fit_table())
    run.say(f"gap: gamma_hat = {rep.gamma:.6g} +- {rep.gamma_se:.2g}, R^2 = {rep.r2:.4f} "
            f"[{rep.status}]")
    return rep.passed


def _cmd_lyapunov(run: _Run) -> bool:
    a = run.args
    rep = ex.run_lyapunov_check(run.cfg, n_paths=a.paths, eta=a.eta,
                                scalar={"n_paths": a.scalar_paths})
    run.csv("lyapunov.csv", *rep.table())
    sc = rep.scalar
    run.csv("lyapunov_scalar.csv", ["lhs_mc", "lhs_se", "rhs", "status"],
            [(sc.lhs, sc.se, sc.rhs, sc.status)])
    run.say(f"lyapunov: max C spread = {rep.spread.max():.4f} (tolerance {rep.tolerance}); "
            f"scalar LHS = {sc.lhs:.5f} +- {sc.se:.2g} vs RHS {sc.rhs:.5f}")
    return rep.passed


def _cmd_structure(run: _Run) -> bool:
    a = run.args
    pts, comps = _points(a.points)
    rep = ex.run_structure_functions(run.cfg, pts, comps, reference_horizon=a.reference_horizon,
                                     reference_chains=a.reference_chains)
    run.csv("structure.csv", *rep.table())
    run.say(f"structure: reference = {rep.reference:.6g} +- {rep.reference_se:.2g}, "
            f"rate = {rep.rate:.4g} (R^2 {rep.r2:.3f})")
    return rep.passed


def _cmd_params(run: _Run) -> bool:
    a = run.args
    rep = ex.run_param_continuity(run.cfg, eps=a.eps, kinds=tuple(a.kinds.split(",")),
                                  t=a.time, n_paths=a.paths, invariant_horizon=a.invariant_horizon)
    run.csv("params.csv", *rep.table())
    run.csv("params_fit.csv", ["parameter", "slope", "slope_se", "r2"],
            [(k, f.slope, f.slope_se, f.r2) for k, f in rep.slopes.items()])
    run.say("params: " + ", ".join(f"{k} slope {f.slope:.3f}" for k, f in rep.slopes.items()))
    return rep.passed


def _cmd_jacobian(run: _Run) -> bool:
    a = run.args
    rep = ex.run_jacobian_fd(run.cfg, eps=a.eps, T=a.time)
    run.csv("jacobian.csv", *rep.table())
    run.say(f"jacobian: log-log slope = {rep.fit.slope:.4f} (target 1 +- {rep.slope_tol})")
    return rep.passed


def _cmd_galerkin(run: _Run) -> bool:
    a = run.args
    rep = ex.run_galerkin_convergence(run.cfg, ladder=a.ladder, T=a.time, n_pairs=a.pairs)
    run.csv("galerkin.csv", *rep.table())
    run.say("galerkin: ratios " + ", ".join(f"{r:.3g}" for r in rep.ratios))
    return rep.passed


def _cmd_generator(run: _Run) -> bool:
    rep = ex.run_generator_check(run.cfg, n_samples=run.args.samples)
    run.csv("generator.csv", *rep.table())
    run.say("generator: slopes " + ", ".join(f"{s:.3f}" for s in rep.slopes))
    return rep.passed


def _cmd_apriori(run: _Run) -> bool:
    a = run.args
    rep = ex.run_apriori_check(run.cfg, n_paths=a.paths, T=a.horizon)
    run.csv("apriori.csv", *rep.table())
    for it in rep.items:
        run.say(f"apriori: {it.name}: {'pass' if it.passed else 'fail'} {it.constants}")
    return rep.passed


def _cmd_doeblin(run: _Run) -> bool:
    a = run.args
    try:
        kernel = read_kernel_csv(a.kernel)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"kernel {a.kernel}: {exc}") from exc
    seed = a.seed if a.seed is not None else 0
    try:
        pipe = doeblin_pipeline(kernel, a.alpha1, a.trials, np.random.default_rng([seed, 1]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = [("alpha1", pipe.alpha1), ("C", pipe.C), ("a", pipe.a), ("delta", pipe.delta),
            ("alpha", pipe.alpha), ("max_ratio", pipe.report.max_ratio)]
    run.csv("doeblin.csv", ["quantity", "value"], rows)
    run.csv("doeblin_ratios.csv", ["ratio"], [(r,) for r in pipe.report.ratios])

    entry = (1 - a.alpha1) * pipe.delta
    a_entry = check_assumption3(kernel, entry)
    model = FiniteKernelCoupling(kernel, pipe.delta, entry)
    D = kernel.D
    far = np.argwhere(D > pipe.delta)
    x0, y0 = (int(far[0][0]), int(far[0][1])) if len(far) else (0, 0)
    lad = coupling_ladder_sim(model, x0, y0, pipe.delta, a.alpha1, a.ladder_horizon,
                              a.episodes, np.random.default_rng([seed, 2]), a_entry)
    run.csv("doeblin_ladder.csv", ["n", "r1_tail", "r1_se", "r1_bound"],
            list(zip(range(len(lad.r1_tail)), lad.r1_tail, lad.r1_se, lad.r1_bound)))
    ladder_ok = lad.r1_within_band()
    run.say(f"doeblin: C = {pipe.C:.6g}, a = {pipe.a:.6g}, delta = {pipe.delta:.6g}, "
            f"alpha = {pipe.alpha:.6g}, max ratio = {pipe.report.max_ratio:.6g}")
    return pipe.report.passes and pipe.assumption2.holds and ladder_ok


def _cmd_harris(run: _Run) -> bool:
    a = run.args
    try:
        val = harris_alpha1(a.alpha_star, a.beta, a.k_star)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run.csv("harris.csv", ["alpha_star", "beta", "K_star", "alpha1"],
            [(a.alpha_star, a.beta, a.k_star, val)])
    run.say(f"harris: alpha1 = {val!r}")
    return True


COMMANDS = {
    "simulate": _cmd_simulate, "pair": _cmd_pair, "gap": _cmd_gap, "lyapunov": _cmd_lyapunov,
    "structure": _cmd_structure, "params": _cmd_params, "jacobian": _cmd_jacobian, "galerkin": _cmd_galerkin,
    "generator": _cmd_generator, "apriori": _cmd_apriori, "doeblin": _cmd_doeblin,
    "harris": _cmd_harris,
}
NEEDS_CONFIG = set(COMMANDS) - {"doeblin", "harris"}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load(args) if args.command in NEEDS_CONFIG else None
        if cfg is not None:
            report = validate_assumption1(cfg.forcing)
            if not report.passes and not args.quiet:
                print("warning: forcing fails the lattice assumption: "
                      + "; ".join(report.reasons), file=sys.stderr)
        ok = COMMANDS[args.command](_Run(args, cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if not ok:
        print(f"{args.command}: pass rule failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())
