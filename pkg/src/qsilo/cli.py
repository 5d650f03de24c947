"""Command-line entry point: ``qsilo {simulate,moments,figures,ism,walk}``.

Exit codes: 0 success, 1 configuration error, 2 statistical-test failure
(the tests are still written out).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io, model, moments, montecarlo, multigrid, walk
from . import ism as ism_mod
from .errors import ConfigurationError, InsufficientDataError, NonConvergenceError, SizeError
from .rng import stream
from .stats import TestResult

log = logging.getLogger("qsilo")

EXIT_OK, EXIT_CONFIG, EXIT_STAT = 0, 1, 2
TEST_HEADER = ("test_name", "statistic", "p_value", "pass")
DEFAULT_TOL = {"fixed-point": 1e-12, "direct": 0.0, "multigrid": 1e-13}
DEFAULT_FIG_N = {1: [127], 2: [127, 255, 511], 3: [15, 31, 63, 127, 255, 511, 1023]}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; here that code means a failed test."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _positive(kind):
    def conv(s):
        v = kind(s)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v

    return conv


def _int_list(s):
    try:
        return [int(x) for x in s.replace(",", " ").split()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _pair(s):
    v = _int_list(s)
    if len(v) != 2:
        raise argparse.ArgumentTypeError("expected two integers 'i,j'")
    return tuple(v)


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else io.default_out_dir()


def _params(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


def _write_tests(man, results):
    man.write_csv(f"{man.command}_tests.csv", TEST_HEADER, [r.row() for r in results])
    for r in results:
        log.info("%-36s %s", r.name, "pass" if r.passed else "FAIL")
    return all(r.passed for r in results)


# ----------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    cfg = model.SiloConfig(args.n, args.dist, args.seed)
    window = None if args.window < 0 else args.window
    plan = montecarlo.McPlan(cfg, args.samples, args.burn_in, args.thin, args.replicas, args.r, window)
    man = io.RunManifest("simulate", _params(args), _out_dir(args), args.seed)
    log.info("simulate: N=%d dist=%s burn-in=%d thin=%d replicas=%d", cfg.N, cfg.weight_dist,
             plan.burn_in, plan.thinning, plan.replicas)
    mc = montecarlo.run_stationary(plan)
    log.info("sampling done; worst mass-balance error %.3g", mc.mass_error)

    sites = montecarlo.site_summaries(mc)
    man.write_csv("sites.csv", ("i", "mean", "var", "stderr"), [s.row() for s in sites])
    pairs = []
    for a in mc.sites:
        for b in mc.sites:
            if a < b:
                c, se = montecarlo.covariance_estimate(mc, a, b)
                pairs.append((int(a), int(b), c, se))
    man.write_csv("pairs.csv", ("i", "j", "cov", "stderr"), pairs)

    results = [_mass_result(mc)]
    n = plan.samples * plan.replicas
    if n >= montecarlo.MIN_GAMMA_SAMPLES:
        x = montecarlo.scaled_site(mc, scale=args.scale)
        rep = montecarlo.gamma_fit_test(x, args.r, cfg.N)
        man.write_csv(
            "gamma.csv", ("N", "r", "ks_stat", "p", "mean", "var"), [rep.row()],
            comments=(f"site {plan.centre}; scale {args.scale}; beta {rep.beta!r}; lag1 {rep.lag1!r}; ess {rep.ess!r}",),
        )
        print(f"gamma: N={cfg.N} r={args.r} beta={rep.beta:g} mean={rep.mean:.6g} "
              f"var={rep.var:.6g} ks={rep.ks_stat:.4g} p={rep.p:.4g}")
        results.append(TestResult("gamma_fit", rep.ks_stat, rep.p, rep.passed()))
    else:
        log.warning("only %d samples: gamma test skipped", n)
    for s in sites:
        print(f"site {s.i}: mean={s.mean:.6g} var={s.var:.6g} se={s.stderr:.3g}")
    ok = _write_tests(man, results)
    man.close()
    return EXIT_OK if ok else EXIT_STAT


def _mass_result(mc):
    return TestResult("mass_balance", mc.mass_error, float("nan"), mc.mass_error <= 1e-9)


# ------------------------------------------------------------------ moments


def _solve(solver, N, alpha, tol):
    tol = tol or DEFAULT_TOL[solver]
    if solver == "fixed-point":
        return moments.solve_R_fixed_point(N, alpha, tol=tol)
    if solver == "direct":
        return moments.solve_R_direct(N, alpha)
    if not multigrid.is_power_of_two(N + 1):
        raise ConfigurationError(f"multigrid needs N+1 to be a power of two, got N = {N}")
    fld, hier = multigrid.solve_multigrid(N, alpha, tol=tol)
    if hier.residuals[-1] > max(tol, 1e-12):
        raise NonConvergenceError(f"multigrid stalled at {hier.residuals[-1]:.3g}", hier.residuals[-1])
    return fld


def cmd_moments(args) -> int:
    man = io.RunManifest("moments", _params(args), _out_dir(args))
    solvers = list(dict.fromkeys(args.solver))
    fields = {}
    for s in solvers:
        log.info("moments: N=%d alpha=%g solver=%s", args.n, args.alpha, s)
        fld = _solve(s, args.n, args.alpha, args.tol)
        res = moments.covariance_residual(fld)
        fields[s] = fld
        rows = [(args.n, args.alpha, i, j, sig, R) for (_, _, i, j, sig, R) in moments.field_rows(fld)]
        man.write_csv(
            f"moments_{s}.csv", ("N", "alpha", "i", "j", "sigma", "R"), rows,
            comments=(f"residual {fld.residual!r}", f"covariance_residual {res!r}", f"iterations {fld.iterations}"),
        )
        print(f"{s}: N={args.n} residual={fld.residual:.3e} covariance_residual={res:.3e} "
              f"sigma(1,1)={float(fld.sigma[0, 0])!r}")
    if len(fields) > 1:
        rows = []
        scale = float(args.n + 1) ** 3
        for k, a in enumerate(solvers):
            for b in solvers[k + 1:]:
                d = float(np.abs(fields[a].R - fields[b].R).max()) / scale
                rows.append((args.n, a, b, d))
                print(f"agreement {a} vs {b}: max|r_a - r_b| = {d:.3e}")
        man.write_csv("agreement.csv", ("N", "solver_a", "solver_b", "max_abs_diff_r"), rows)
    man.close()
    return EXIT_OK


# ------------------------------------------------------------------ figures


def cmd_figures(args) -> int:
    n_list = args.n_list or DEFAULT_FIG_N[args.fig]
    for N in n_list:
        if not multigrid.is_power_of_two(N + 1):
            raise ConfigurationError(f"figure data uses multigrid: N+1 must be a power of two, got N = {N}")
    man = io.RunManifest(f"figures{args.fig}", _params(args), _out_dir(args))
    if args.fig == 1:
        N = n_list[0]
        fld, _ = multigrid.solve_multigrid(N, args.alpha)
        r = multigrid.scaled(fld)
        rows = [(N, i, j, float(r[i, j])) for i in range(N + 2) for j in range(N + 2)]
        man.write_csv("fig1_surface.csv", ("N", "i", "j", "r"), rows)
        print(f"fig1: N={N} max r={r.max():.6g} min r={r.min():.6g}")
    elif args.fig == 2:
        profiles, rows = {}, []
        for N in n_list:
            fld, _ = multigrid.solve_multigrid(N, args.alpha)
            x, rd = multigrid.diagonal_profile(fld)
            profiles[N] = (x, rd)
            rows.extend((N, float(a), float(b)) for a, b in zip(x, rd))
        comments = []
        for k, a in enumerate(n_list):
            for b in n_list[k + 1:]:
                d = profile_sup_difference(profiles[a], profiles[b])
                comments.append(f"sup_diff N={a} N={b} {d!r}")
                print(f"fig2: sup |r_{a} - r_{b}| = {d:.3e}")
        man.write_csv("fig2_diagonal.csv", ("N", "x", "r_diag"), rows, comments)
    else:
        series = multigrid.corner_series(n_list, args.alpha)
        rows = [(math.log2(N + 1), c) for N, c in series]
        man.write_csv("fig3_corner.csv", ("log2_N_plus_1", "corner_value"), rows)
        for N, c in series:
            print(f"fig3: N={N} R(1,1)/(N+1)^2={c:.6f}")
    man.close()
    return EXIT_OK


def profile_sup_difference(p, q):
    """Sup-norm distance of two diagonal profiles, the finer one interpolated at
    the coarser grid points (grids with N+1 powers of two nest)."""
    (xa, ra), (xb, rb) = sorted([p, q], key=lambda t: len(t[0]))
    return float(np.abs(ra - np.interp(xa, xb, rb)).max())


# ---------------------------------------------------------------------- ism


def cmd_ism(args) -> int:
    man = io.RunManifest("ism", _params(args), _out_dir(args), args.seed)
    log.info("ism invariance: L=%d rho=%g steps=%d samples=%d", args.l, args.rho, args.steps, args.samples)
    rep = ism_mod.gamma_invariance_test(args.l, args.rho, args.steps, args.samples, args.seed)
    man.write_csv(
        "ism_summary.csv", ("L", "rho", "steps", "n_configs", "mean", "var", "ks_stat", "p", "mass_drift"),
        [(rep.L, rep.rho, rep.steps, rep.n_configs, rep.mean, rep.var, rep.ks_stat, rep.p_value, rep.mass_drift)],
    )
    results = rep.results()
    print(f"ism: mean={rep.mean:.6g} var={rep.var:.6g} ks={rep.ks_stat:.4g} p={rep.p_value:.4g}")
    if args.pairs > 0:
        log.info("reversibility: %d pairs on L=8", args.pairs)
        results += [r.result() for r in ism_mod.reversibility_test(8, args.rho, n_pairs=args.pairs, seed=args.seed)]
    if args.split_samples > 0:
        log.info("splitting: %d draws", args.split_samples)
        results += ism_mod.splitting_lemma_test(args.rho, args.split_samples, args.seed).results()
    ok = _write_tests(man, results)
    man.close()
    return EXIT_OK if ok else EXIT_STAT


# --------------------------------------------------------------------- walk


def cmd_walk(args) -> int:
    N = args.n
    start = args.start or ((N + 1) // 2, (N + 1) // 2)
    walk._check_diamond(N, start)  # odd N, start inside the diamond
    i, j = start
    if not (1 <= i <= N and 1 <= j <= N):
        raise ConfigurationError(f"start {start} must lie in 1..N")
    man = io.RunManifest("walk", _params(args), _out_dir(args), args.seed)
    K = moments.source_K(N, args.alpha)
    k_bar = float(np.abs(K).max())
    header = ("i", "j", "estimate", "stderr", "n_samples", "truncated_fraction")

    log.info("diamond walk: N=%d start=%s samples=%d", N, start, args.samples)
    t, trunc = walk.sample_T_diamond(start, N, k_bar, args.samples, stream(args.seed, "diamond", N, i, j))
    bound = walk.WalkEstimate(i, j, float(t.mean()), float(t.std(ddof=1) / math.sqrt(len(t))), len(t), trunc / len(t))
    target = walk.expected_diagonal_visits(N) * k_bar
    man.write_csv("walk_bound.csv", header, [bound.row()], comments=(f"K_bar {k_bar!r}", f"target {target!r}"))
    print(f"bound: K_bar={k_bar:g} estimate={bound.estimate:.6g} +- {bound.stderr:.3g} (target {target:g})")

    log.info("absorbing walk: estimating R%s", start)
    est = walk.estimate_R(start, N, args.alpha, args.samples, stream(args.seed, "walk", N, i, j))
    man.write_csv("walk_T.csv", header, [est.row()])
    print(f"T: estimate={est.estimate:.6g} +- {est.stderr:.3g}")

    results = []
    if i == j:
        z = abs(bound.estimate - target)
        results.append(TestResult("diamond_bound", bound.estimate, z / bound.stderr if bound.stderr else 0.0,
                                  z <= 3 * bound.stderr))
    if N <= moments.MAX_DIRECT_N:
        R = float(moments.solve_R_direct(N, args.alpha).R[i, j])
        z = abs(est.estimate - R)
        results.append(TestResult("T_vs_direct", est.estimate - R, z / est.stderr if est.stderr else 0.0,
                                  z <= 3 * est.stderr or (est.stderr == 0 and z < 1e-12)))
        print(f"direct R{start} = {R!r}")
    ok = _write_tests(man, results)
    man.close()
    return EXIT_OK if ok else EXIT_STAT


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qsilo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out", help=f"output directory (default ${io.OUT_ENV} or .)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("simulate", help="Monte Carlo of the stationary silo")
    s.add_argument("--n", type=_positive(int), required=True)
    s.add_argument("--dist", default="exp", help="const, exp, uniform or gamma:k")
    s.add_argument("--burn-in", type=_positive(int), default=None, help="default 20 N^2")
    s.add_argument("--samples", type=_positive(int), default=1000)
    s.add_argument("--thin", type=_positive(int), default=None, help="default max(1, N//2)")
    s.add_argument("--replicas", type=_positive(int), default=1)
    s.add_argument("--r", type=float, default=0.5, help="macroscopic position in (0,1)")
    s.add_argument("--window", type=int, default=2, help="sites within this offset of [rN]; -1 for all")
    s.add_argument("--scale", choices=("N+1", "N"), default="N+1", help="Gamma test normalisation")
    common(s)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("moments", help="exact second moments")
    m.add_argument("--n", type=_positive(int), required=True)
    m.add_argument("--alpha", type=float, default=0.0, help="grain-weight variance")
    m.add_argument("--solver", action="append", choices=("fixed-point", "direct", "multigrid"),
                   help="repeat to run several solvers and compare (default direct)")
    m.add_argument("--tol", type=_positive(float), default=None,
                   help="iteration tolerance (default 1e-12 fixed-point, 1e-13 multigrid)")
    common(m, seed=False)
    m.set_defaults(func=cmd_moments)

    f = sub.add_parser("figures", help="figure data as CSV")
    f.add_argument("--fig", type=int, choices=(1, 2, 3), required=True)
    f.add_argument("--n-list", type=_int_list, default=None, help="comma separated N values")
    f.add_argument("--alpha", type=float, default=0.0)
    common(f, seed=False)
    f.set_defaults(func=cmd_figures)

    i = sub.add_parser("ism", help="infinite silo checks on a ring")
    i.add_argument("--l", type=_positive(int), default=256)
    i.add_argument("--rho", type=_positive(float), default=1.0)
    i.add_argument("--steps", type=_positive(int), default=1000)
    i.add_argument("--samples", type=_positive(int), default=1000, help="independent ring configurations")
    i.add_argument("--pairs", type=int, default=0, help="reversibility pairs (0 skips)")
    i.add_argument("--split-samples", type=int, default=0, help="splitting draws (0 skips)")
    common(i)
    i.set_defaults(func=cmd_ism)

    w = sub.add_parser("walk", help="random-walk oracle and diamond bound")
    w.add_argument("--n", type=_positive(int), required=True)
    w.add_argument("--start", type=_pair, default=None, help="'i,j' (default centre of the diagonal)")
    w.add_argument("--samples", type=_positive(int), default=100_000)
    w.add_argument("--alpha", type=float, default=0.0)
    common(w)
    w.set_defaults(func=cmd_walk)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "solver", "unset") is None:
        args.solver = ["direct"]
    try:
        return args.func(args)
    except (ConfigurationError, SizeError, InsufficientDataError) as e:
        print(f"qsilo {args.command}: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as e:
        print(f"qsilo {args.command}: {e}", file=sys.stderr)
        return EXIT_STAT


if __name__ == "__main__":
    sys.exit(main())
