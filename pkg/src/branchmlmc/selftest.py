"""Fast invariant suite behind ``branchmlmc selftest``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .branching import (BranchIndex, BranchSchedule, fine_steps, leaf_increments, pair_meet_census,
                        run_batch, simulate_tree, tree_work)
from .diagnostics import variance_study
from .estimators import make_config
from .mlmc import LevelConfig, allocate_samples, run_mlmc
from .sde_models import make_clark_cameron


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_work_closed_form(seed: int) -> CheckResult:
    bad = []
    for eta in (0.8, 1.0, 4 / 3, 1.5):
        cfg = make_config(eta=eta, seed=seed, threads=1)
        for lev in range(0, 9):
            _, w = cfg.sample_level(lev, 0, 2, threads=1)
            if np.any(w != tree_work(cfg.schedule(lev))):
                bad.append((eta, lev))
    # h = 2^-l with tau_k = 2^-k-1 costs (l + 1) 2^(l - 1) particle-steps
    for lev in range(1, 13):
        if tree_work(BranchSchedule(lev, 2**lev)) != (lev + 1) * 2 ** (lev - 1):
            bad.append(("aligned", lev))
    return CheckResult("work closed form", not bad, f"mismatches: {bad}" if bad else "exact on all tested levels")


def check_telescoping(seed: int) -> CheckResult:
    L, n = 4, 40_000
    cfg = make_config(seed=seed, threads=1)
    total, var = 0.0, 0.0
    for lev in range(L + 1):
        y, _ = cfg.sample_level(lev, 0, n)
        total += y.mean()
        var += y.var(ddof=1) / n
    m = 400_000
    sched = BranchSchedule.unbranched(L, fine_steps(L))
    s1, _, _, _ = run_batch(cfg.model, cfg.scheme, cfg.dset, sched, 0, m, seed + 1, coarse=False)
    var += s1.var(ddof=1) / m
    z = (total - s1.mean()) / math.sqrt(var)
    return CheckResult("telescoping mean", abs(z) < 4, f"sum of level means {total:.5f} vs single level {s1.mean():.5f}, z={z:.2f}")


def check_branching_unbiased(seed: int) -> CheckResult:
    lev, n = 5, 50_000
    b, _ = make_config(seed=seed, threads=1).sample_level(lev, 0, n)
    p, _ = make_config(seed=seed, branching=False, threads=1).sample_level(lev, 0, n)
    d = b - p
    z = d.mean() / (d.std(ddof=1) / math.sqrt(n))
    return CheckResult("E[branching] = E[plain]", abs(z) < 4, f"paired z={z:.2f}")


def check_antithetic_identity(seed: int) -> CheckResult:
    model = make_clark_cameron()
    cfg = make_config("clark-cameron", "antithetic-cc", branching=False, seed=seed)
    sched = cfg.schedule(4)
    n = 100_000
    _, _, _, leaves = run_batch(model, "antithetic-cc", cfg.dset, sched, 0, n, seed, leaves=True)
    f = leaves[:, 0, 0, 1]
    a = leaves[:, 0, 2, 1]
    d = f - a
    z_mean = d.mean() / (d.std(ddof=1) / math.sqrt(n))
    q = (f - f.mean()) ** 2 - (a - a.mean()) ** 2
    z_var = q.mean() / (q.std(ddof=1) / math.sqrt(n))
    ok = abs(z_mean) < 4 and abs(z_var) < 4
    return CheckResult("antithetic distributional identity", ok, f"z_mean={z_mean:.2f} z_var={z_var:.2f}")


def check_census() -> CheckResult:
    for depth in range(0, 7):
        leaves = [BranchIndex(depth, c) for c in range(1 << depth)]
        counts: dict[int, int] = {}
        for u, v in product(leaves, leaves):
            if u != v:
                m = u.meet_depth(v)
                counts[m] = counts.get(m, 0) + 1
        if counts != pair_meet_census(depth):
            return CheckResult("pair-meet census", False, f"depth {depth}: {counts}")
    return CheckResult("pair-meet census", True, "enumeration matches 2^(2h-l-1) for depth <= 6")


def check_allocation(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(500):
        k = int(rng.integers(1, 12))
        V = rng.uniform(0, 1, k) * 10.0 ** rng.uniform(-8, 0, k)
        W = 10.0 ** rng.uniform(0, 6, k)
        eps = 10.0 ** rng.uniform(-4, -1)
        N = allocate_samples(V, W, eps)
        worst = max(worst, float(np.sum(V / N)) / (eps * eps / 2))
    return CheckResult("allocation variance bound", worst <= 1 + 1e-12, f"max sum(V/N)/(eps^2/2) = {worst:.6f}")


def check_cc_exact_component(seed: int) -> CheckResult:
    model = make_clark_cameron()
    cfg = make_config("clark-cameron", "euler", seed=seed, eta=4 / 3)
    lev = 4
    sched = cfg.schedule(lev)
    for rep in (0, 7):
        leaves, _ = simulate_tree(lev, model, "euler", cfg.dset, sched, rep, seed)
        for leaf in leaves:
            inc = leaf_increments(sched, leaf.index, rep, seed, 2)
            w = 0.0
            for step in inc:
                w = w + step[0]
            if leaf.fine[0] != w:
                return CheckResult("clark-cameron X1 = W1", False, f"leaf {leaf.index}: {leaf.fine[0]!r} != {w!r}")
    return CheckResult("clark-cameron X1 = W1", True, f"bitwise on {2 * sched.n_leaves} replayed leaves")


def check_thread_invariance(seed: int) -> CheckResult:
    cfg = make_config(seed=seed, shard=512)
    ref = cfg.sample_level(6, 0, 5000, threads=1)[0]
    for t in (2, 8):
        if not np.array_equal(ref, cfg.sample_level(6, 0, 5000, threads=t)[0]):
            return CheckResult("thread invariance", False, f"level samples differ at threads={t}")
    lv = LevelConfig(warmup=2000)
    runs = [run_mlmc(0.02, lv, cfg, threads=t) for t in (1, 2, 8)]
    if len({(r.estimate, r.total_work) for r in runs}) != 1:
        return CheckResult("thread invariance", False, "mlmc results differ")
    csvs = {variance_study([2, 3, 4], 2000, {"b": cfg}, threads=t).to_csv() for t in (1, 2, 8)}
    if len(csvs) != 1:
        return CheckResult("thread invariance", False, "study CSV differs")
    return CheckResult("thread invariance", True, "bit-identical at 1, 2 and 8 threads")


def run_selftest(seed: int = 0) -> list[CheckResult]:
    checks = [
        lambda: check_work_closed_form(seed), lambda: check_telescoping(seed),
        lambda: check_branching_unbiased(seed), lambda: check_antithetic_identity(seed),
        check_census, lambda: check_allocation(seed), lambda: check_cc_exact_component(seed),
        lambda: check_thread_invariance(seed),
    ]
    out = []
    for chk in checks:
        try:
            out.append(chk())
        except Exception as e:  # a crashing check is a failing check
            out.append(CheckResult(getattr(chk, "__name__", "check"), False, f"{type(e).__name__}: {e}"))
    return out
