"""``branchmlmc`` command line: price, study, selftest."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time

from . import diagnostics as dg
from .config import ConfigError, parse_config, parse_levels
from .mlmc import run_mlmc

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_UNCONVERGED = 3

STUDIES = ("variance", "work", "kurtosis", "tau", "cond-density", "complexity")

# flag dest -> config key
_FLAG_KEYS = {
    "seed": "seed", "threads": "threads", "model": "model", "scheme": "scheme", "set": "payoff.set",
    "threshold": "payoff.threshold", "eta": "branch.eta", "tau0": "branch.tau0", "align": "branch.align",
    "eps": "mlmc.eps", "max_level": "mlmc.max_level", "warmup": "mlmc.warmup", "alpha": "mlmc.alpha",
    "levels": "study.levels", "n": "study.n", "h": "study.h", "taus": "study.taus", "deltas": "study.deltas",
    "n_outer": "study.n_outer", "n_inner": "study.n_inner", "eps_list": "study.eps_list", "out": "output",
}


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run options")
    g.add_argument("--config", help="file of 'section.key = value' lines")
    g.add_argument("--seed", help="master seed (default: $MLMC_BRANCH_SEED or 0)")
    g.add_argument("--threads", help="worker threads (default: available CPUs)")
    g.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    g.add_argument("--out", help="directory for CSV tables")
    g.add_argument("--model")
    g.add_argument("--scheme")
    g.add_argument("--set", help="digital set name")
    g.add_argument("--threshold")
    g.add_argument("--eta")
    g.add_argument("--tau0")
    g.add_argument("--align", help="split or snap")
    g.add_argument("--no-branching", action="store_true", help="plain level differences")
    g.add_argument("--max-level", dest="max_level")
    g.add_argument("--warmup")
    g.add_argument("--alpha", help="weak rate for the bias proxy, or 'fit'")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="branchmlmc", description="Multilevel path-branching estimator for digital options.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="adaptive MLMC estimate of P(X_1 in S)")
    _common(p)
    p.add_argument("--eps", help="target root-mean-square error")

    s = sub.add_parser("study", help="diagnostic tables (CSV)")
    s.add_argument("kind", choices=STUDIES)
    _common(s)
    s.add_argument("--levels", help="a..b or a list")
    s.add_argument("--n", help="samples per level")
    s.add_argument("--h", help="step size for the tau study, e.g. 2^-10")
    s.add_argument("--taus", help="comma separated tau grid")
    s.add_argument("--deltas", help="comma separated delta grid")
    s.add_argument("--n-outer", dest="n_outer")
    s.add_argument("--n-inner", dest="n_inner")
    s.add_argument("--eps-list", dest="eps_list")

    t = sub.add_parser("selftest", help="fast invariant suite")
    _common(t)
    return ap


def load_config(args):
    text = ""
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    overrides = {key: getattr(args, dest) for dest, key in _FLAG_KEYS.items() if getattr(args, dest, None) is not None}
    if getattr(args, "no_branching", False):
        overrides["branch.enabled"] = False
    return parse_config(text, overrides)


def _say(args, msg: str = "") -> None:
    if not args.quiet:
        print(msg)


def cmd_price(args, cfg) -> int:
    t0 = time.perf_counter()
    res = run_mlmc(cfg["mlmc.eps"], cfg.levels(), cfg.estimator(), cfg.threads)
    _say(args, f"estimate      {res.estimate:.6f}")
    _say(args, f"eps           {res.eps:g}")
    _say(args, f"bias proxy    {res.bias:.3e}  (alpha={res.alpha:.3g})")
    _say(args, f"std error     {math.sqrt(res.estimator_variance):.3e}")
    _say(args, f"total work    {res.total_work:.6g}")
    _say(args, f"levels        0..{res.L}")
    _say(args, f"time          {time.perf_counter() - t0:.1f}s")
    _say(args, f"{'l':>3} {'N_l':>10} {'mean':>12} {'var':>12} {'work':>10} {'kurt':>9}")
    for s in res.levels:
        _say(args, f"{s.level:>3} {s.n:>10} {s.mean:>12.4e} {s.variance:>12.4e} {s.mean_work:>10.4g} {s.kurtosis:>9.3g}")
    if res.bias_unconverged:
        print(f"warning: bias target not met by level {res.L} (mlmc.max_level)", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def _pair(cfg):
    return {"plain": cfg.estimator(branching=False), "branching": cfg.estimator(branching=True)}


def _level_of_h(cfg, h: float) -> int:
    ratio = math.log(cfg["mlmc.h0"] / h) / math.log(cfg["mlmc.M"])
    lev = round(ratio)
    if lev < 0 or abs(ratio - lev) > 1e-9:
        raise ConfigError(f"study.h = {h} is not h0 * M^-l for an integer l")
    return lev


def run_study(kind: str, cfg):
    threads = cfg.threads
    if kind == "variance":
        return dg.variance_study(cfg["study.levels"], cfg["study.n"], _pair(cfg), threads)
    if kind == "kurtosis":
        return dg.kurtosis_study(cfg["study.levels"], cfg["study.n"], _pair(cfg), threads)
    if kind == "work":
        return dg.work_study(cfg["study.levels"], cfg.estimator(branching=True))
    if kind == "tau":
        lev = _level_of_h(cfg, cfg["study.h"])
        return dg.tau_study(lev, cfg["study.taus"], cfg["study.n_outer"], cfg.estimator(branching=True),
                            cfg["study.n_inner"], threads)
    if kind == "cond-density":
        return dg.cond_density_study(cfg["study.taus"], cfg["study.deltas"], cfg["study.n_outer"],
                                     cfg.estimator(branching=True), cfg["study.n_inner"], threads=threads)
    if kind == "complexity":
        return dg.complexity_sweep(cfg["study.eps_list"], _pair(cfg), cfg.levels(), threads)
    raise ConfigError(f"unknown study {kind!r}")


def cmd_study(args, cfg) -> int:
    t0 = time.perf_counter()
    table = run_study(args.kind, cfg)
    table.meta.setdefault("seed", cfg.seed)
    out_dir = cfg["output"]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{args.kind}.csv")
    table.to_csv(path)
    _say(args, f"{args.kind}: {len(table)} rows -> {path} ({time.perf_counter() - t0:.1f}s)")
    for key in ("exponent_delta", "exponent_tau"):
        if key in table.meta:
            _say(args, f"  {key} = {table.meta[key]:.3f}")
    if len(table) >= 3 and args.kind in ("variance", "kurtosis", "tau", "complexity"):
        cols = ["statistic"]
        if args.kind in ("variance", "kurtosis"):
            stat = "var" if args.kind == "variance" else "kurt"
            cols = [f"plain.{stat}", f"branching.{stat}"]
        elif args.kind == "complexity":
            cols = ["plain.work_eps2", "branching.work_eps2"]
        for col in cols:
            try:
                fit = dg.fit_rate(table, col)
                _say(args, f"  slope[{col}] = {fit.slope:.3f} (R^2 {fit.r2:.3f}, {fit.points} points)")
            except ValueError as e:
                _say(args, f"  slope[{col}] unavailable: {e}")
    return EXIT_OK


def cmd_selftest(args, cfg) -> int:
    from .selftest import run_selftest

    results = run_selftest(seed=cfg.seed)
    for r in results:
        _say(args, f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    failed = [r for r in results if not r.passed]
    _say(args, f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_SELFTEST if failed else EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "study" and args.kind in ("variance", "kurtosis") and args.no_branching:
            raise ConfigError("--no-branching has no effect on paired plain/branching studies")
        cfg = load_config(args)
        if args.command == "price":
            return cmd_price(args, cfg)
        if args.command == "study":
            return cmd_study(args, cfg)
        return cmd_selftest(args, cfg)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
