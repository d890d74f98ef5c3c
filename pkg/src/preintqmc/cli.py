"""Command-line entry point: ``preintqmc {price,converge,anova,check}``."""
from __future__ import annotations

import argparse
import sys

from . import anova, bench, checks
from .brownian import TimeGrid, factorize
from .errors import PreintError
from .payoff import MarketParams, make_digital_asian

_FACTORIZATIONS = ("standard", "bridge", "pca")


def _market_parent():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("market")
    g.add_argument("--S0", type=float, default=100.0, help="initial asset price (default 100)")
    g.add_argument("--K", type=float, default=100.0, help="strike (default 100)")
    g.add_argument("--r", type=float, default=0.1, help="interest rate (default 0.1)")
    g.add_argument("--sigma", type=float, default=0.1, help="volatility (default 0.1)")
    g.add_argument("--T", type=float, default=1.0, help="maturity (default 1)")
    g.add_argument("--factorization", choices=_FACTORIZATIONS, default="pca")
    return p


def _sampling_parent():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--N", type=int, action="append", help="sample size, a power of two (repeatable)")
    p.add_argument("--reps", type=int, default=10, help="replications per cell (default 10)")
    p.add_argument("--seed", type=int, default=bench.ExperimentConfig.seed, help="master seed")
    p.add_argument("--dirnums", help="direction-number table in Joe-Kuo format")
    return p


def build_parser() -> argparse.ArgumentParser:
    market, sampling = _market_parent(), _sampling_parent()
    parser = argparse.ArgumentParser(
        prog="preintqmc",
        description="Preintegrated (quasi-)Monte Carlo pricing of a digital Asian option.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", parents=[market, sampling], help="single estimate")
    p.add_argument("--d", type=int, default=256)
    p.add_argument("--method", choices=bench.METHODS, default="pre-qmc")

    p = sub.add_parser("converge", parents=[market, sampling], help="convergence experiment, written as CSV")
    p.add_argument("--d", type=int, default=256)
    p.add_argument(
        "--method", choices=bench.METHODS, action="append", help="restrict to these methods (repeatable)"
    )
    p.add_argument("--ref", type=float, help="fixed reference value instead of the high-N run")
    p.add_argument("--out", default=".", help="output directory (default: current)")

    p = sub.add_parser("anova", parents=[market], help="ANOVA variance table as CSV")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--n", type=int, default=anova.GH_LEVEL, help="Gauss-Hermite nodes per axis")
    p.add_argument("--out", help="CSV file (default: stdout)")

    p = sub.add_parser("check", parents=[market], help="numerical invariant suite")
    p.add_argument("--d", type=int, default=256)
    return parser


def _market(args) -> MarketParams:
    return MarketParams(S0=args.S0, K=args.K, r=args.r, sigma=args.sigma, T=args.T)


def _config(args, **extra) -> bench.ExperimentConfig:
    return bench.ExperimentConfig(
        market=_market(args),
        d=args.d,
        factorization=args.factorization,
        sample_sizes=tuple(args.N) if args.N else bench.DEFAULT_SIZES,
        replications=args.reps,
        seed=args.seed,
        dirnums=args.dirnums,
        **extra,
    )


def _cmd_price(args):
    cfg = _config(args)
    n = cfg.sample_sizes[-1]
    seed = bench.replication_seed(cfg.seed, bench.METHODS.index(args.method), n, 0)
    print(f"{bench.estimate(args.method, cfg, n, seed):.12f}")
    return 0


def _cmd_converge(args):
    cfg = _config(args, methods=tuple(args.method) if args.method else bench.METHODS, reference=args.ref)
    report = bench.run_experiment(cfg, progress=lambda msg: print(msg, file=sys.stderr))
    paths = report.to_csv(args.out)
    for method, (slope, stderr) in report.rates.items():
        print(f"{method:8s} slope {slope:+.3f} (stderr {stderr:.3f})")
    if not report.reference.accurate:
        print("warning: reference value is not accurate enough for the smallest RMSE", file=sys.stderr)
    print("wrote " + ", ".join(paths.values()))
    return 0


def _cmd_anova(args):
    g = make_digital_asian(_market(args), factorize(TimeGrid(args.d, args.T), args.factorization))
    report = anova.variance_report(anova.decompose(g, n=args.n))
    if args.out:
        report.to_csv(args.out)
    else:
        report.to_csv(sys.stdout)
    if report.note:
        print(f"note: {report.note}", file=sys.stderr)
    return 0


def _cmd_check(args):
    results = checks.run_checks(args.d, _market(args))
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


_COMMANDS = {"price": _cmd_price, "converge": _cmd_converge, "anova": _cmd_anova, "check": _cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (PreintError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
