"""Empirical studies: per-level moments, nested conditional moments, rate fits, complexity sweeps."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .branching import SNAP, BranchSchedule, fine_steps, run_batch, tree_work
from .estimators import EstimatorConfig
from .mlmc import LevelConfig, MomentAccumulator, allocate_samples, kurtosis, run_mlmc
from .parallel import map_replicates


@dataclass
class StudyTable:
    """Rows of ``(abscissa, statistic, stderr, n, aux...)`` plus ``key=value`` metadata."""

    name: str
    abscissa: list[float] = field(default_factory=list)
    statistic: list[float] = field(default_factory=list)
    stderr: list[float] = field(default_factory=list)
    n: list[int] = field(default_factory=list)
    aux: dict[str, list[float]] = field(default_factory=dict)
    meta: dict[str, object] = field(default_factory=dict)

    def add_row(self, x: float, stat: float, se: float, n: int, **aux) -> None:
        if self.abscissa:
            prev = self.abscissa[-1]
            trend = [np.sign(b - a) for a, b in zip(self.abscissa, self.abscissa[1:])]
            if x == prev or (trend and np.sign(x - prev) != trend[0]):
                raise ValueError("abscissae must be strictly monotone")
        if not se >= 0 and not math.isnan(se):
            raise ValueError("stderr must be >= 0")
        if self.abscissa and set(aux) != set(self.aux):
            raise ValueError("aux columns must match earlier rows")
        self.abscissa.append(float(x))
        self.statistic.append(float(stat))
        self.stderr.append(float(se))
        self.n.append(int(n))
        for k, v in aux.items():
            self.aux.setdefault(k, []).append(float(v))

    def __len__(self) -> int:
        return len(self.abscissa)

    def column(self, name: str) -> np.ndarray:
        if name in ("abscissa", "statistic", "stderr", "n"):
            return np.asarray(getattr(self, name), dtype=float)
        return np.asarray(self.aux[name], dtype=float)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# study={self.name}\n")
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        cols = list(self.aux)
        buf.write(",".join(["abscissa", "statistic", "stderr", "n", *cols]) + "\n")
        for i in range(len(self)):
            vals = [self.abscissa[i], self.statistic[i], self.stderr[i]]
            row = [repr(float(v)) for v in vals] + [str(self.n[i])] + [repr(self.aux[c][i]) for c in cols]
            buf.write(",".join(row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    lo: float
    hi: float
    points: int


def fit_xy(x, y, min_points: int = 3) -> RateFit:
    """Least squares of ``log y`` on ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < min_points:
        raise ValueError(f"need at least {min_points} points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss == 0 else float(min(1.0, max(0.0, 1.0 - np.sum(resid**2) / ss)))
    return RateFit(float(slope), float(intercept), r2, float(x.min()), float(x.max()), int(x.size))


def fit_rate(table: StudyTable, column: str = "statistic", max_rel_se: float = 0.2,
             x_range: tuple[float, float] | None = None) -> RateFit:
    """Slope of ``column`` against the abscissa using rows whose stderr is below ``max_rel_se``."""
    x = table.column("abscissa")
    y = table.column(column)
    if column == "statistic":
        se = table.column("stderr")
    elif column + "_se" in table.aux:
        se = table.column(column + "_se")
    else:
        se = np.zeros_like(y)
    keep = np.isfinite(y) & (se < max_rel_se * np.abs(y))
    if x_range is not None:
        keep &= (x >= min(x_range)) & (x <= max(x_range))
    if np.any(y[keep] <= 0):
        raise ValueError(f"non-positive values in column {column!r}")
    return fit_xy(x[keep], y[keep])


def _kurtosis_se(y: np.ndarray, batches: int = 10) -> float:
    if y.size < 4 * batches:
        return math.nan
    ks = [kurtosis(MomentAccumulator().add(b)) for b in np.array_split(y, batches)]
    ks = np.asarray(ks)
    if not np.all(np.isfinite(ks)):
        return math.nan
    return float(ks.std(ddof=1) / math.sqrt(batches))


def level_moments(cfg: EstimatorConfig, level: int, n: int, threads: int | None = None) -> dict[str, float]:
    y, w = cfg.sample_level(level, 0, n, threads)
    acc = MomentAccumulator().add(y, w)
    var = acc.variance
    kurt = kurtosis(acc)
    var_se = var * math.sqrt(max(kurt - 1.0, 0.0) / n) if math.isfinite(kurt) else math.nan
    return {
        "mean": acc.mean, "mean_se": math.sqrt(var / n), "var": var, "var_se": var_se,
        "work": acc.mean_work, "kurt": kurt, "kurt_se": _kurtosis_se(y),
    }


def _per_level_study(name, stat_key, levels, n, configs, threads):
    if not configs:
        raise ValueError("need at least one estimator config")
    labels = list(configs)
    first = configs[labels[0]]
    table = StudyTable(name, meta={"n": n, "seed": first.seed, "abscissa": "h", "primary": labels[0]})
    for label, cfg in configs.items():
        table.meta[f"{label}.config"] = (f"{cfg.model.name}/{cfg.scheme}/{cfg.dset.name}/"
                                         f"branching={cfg.branching}/eta={cfg.eta}/tau0={cfg.tau0}")
    for lev in levels:
        row = {}
        for label, cfg in configs.items():
            for k, v in level_moments(cfg, lev, n, threads).items():
                row[f"{label}.{k}"] = v
        stat = row[f"{labels[0]}.{stat_key}"]
        se = row[f"{labels[0]}.{stat_key}_se"]
        table.add_row(first.h(lev), stat, se if math.isfinite(se) else math.inf, n, level=lev, **row)
    return table


def variance_study(levels, n: int, configs: dict[str, EstimatorConfig], threads: int | None = None) -> StudyTable:
    """Per level and estimator: variance, mean, mean work and kurtosis against ``h``.

    Configurations that share a seed share the increments of the unbranched
    root segment, so plain and branching columns are positively coupled.
    """
    if n < 1000:
        raise ValueError("variance study needs n >= 1000")
    return _per_level_study("variance", "var", levels, n, configs, threads)


def kurtosis_study(levels, n: int, configs: dict[str, EstimatorConfig], threads: int | None = None) -> StudyTable:
    if n < 10_000:
        raise ValueError("kurtosis study needs n >= 10000")
    return _per_level_study("kurtosis", "kurt", levels, n, configs, threads)


def work_study(levels, cfg: EstimatorConfig, check_reps: int = 4) -> StudyTable:
    """Closed-form tree work per level, checked against the walker on a few replicates."""
    table = StudyTable("work", meta={"eta": cfg.eta, "tau0": cfg.tau0, "align": cfg.resolved_align, "abscissa": "h"})
    for lev in levels:
        sched = cfg.schedule(lev)
        closed = tree_work(sched)
        _, measured = cfg.sample_level(lev, 0, check_reps, threads=1)
        if np.any(measured != closed):
            raise AssertionError(f"level {lev}: walker work {measured} != closed form {closed}")
        table.add_row(cfg.h(lev), closed, 0.0, check_reps, level=lev, depth=sched.depth,
                      leaves=sched.n_leaves, collisions=sched.collisions, plain=sched.n_fine)
    return table


def _check_pow2(n_inner: int) -> int:
    k = n_inner.bit_length() - 1
    if n_inner < 2 or n_inner != 1 << k:
        raise ValueError("n_inner must be a power of two >= 2")
    return k


def _nested(cfg, sched, n_outer, n_inner, threads, band=-1.0, coarse=None):
    """Per outer path: ``mbar**2 - s**2 / n_inner`` over the inner continuations."""
    m = float(n_inner)

    def shard(s, cnt):
        s1, s2, _, _ = run_batch(cfg.model, cfg.scheme, cfg.dset, sched, s, cnt, cfg.seed,
                                 band=band, coarse=coarse)
        mbar = s1 / m
        s2_inner = (s2 - m * mbar * mbar) / (m - 1.0)
        return (mbar * mbar - s2_inner / m,)

    (stat,) = map_replicates(shard, 0, n_outer, threads or cfg.threads, max(1, cfg.shard // n_inner))
    return stat


def _nested_schedule(cfg, level, tau, k):
    n_fine = fine_steps(level, cfg.h0, cfg.M)
    ev = (1.0 - tau) * n_fine
    if cfg.resolved_align == SNAP and level > 0:
        ev = math.floor(ev / cfg.M + 0.5) * cfg.M
    elif abs(ev - round(ev)) < 1e-9:
        ev = float(round(ev))
    return BranchSchedule.from_events(level, n_fine, [ev] * k, cfg.M)


def tau_study(level: int, taus, n_outer: int, cfg: EstimatorConfig, n_inner: int = 64,
              threads: int | None = None) -> StudyTable:
    """Nested estimate of ``E[(E[dP_l | F_{1-tau}])^2]`` on a grid of ``tau``.

    The shared path runs to ``1 - tau``; ``n_inner`` coupled continuations
    follow, and the inner-variance correction removes the ``1/n_inner`` bias.
    """
    k = _check_pow2(n_inner)
    h = cfg.h(level)
    taus = [float(t) for t in taus]
    for t in taus:
        if not h * (1 - 1e-12) <= t <= cfg.tau0 * (1 + 1e-12):
            raise ValueError(f"tau={t} outside [h, tau0] = [{h}, {cfg.tau0}]")
    table = StudyTable("tau", meta={"level": level, "h": h, "n_inner": n_inner, "seed": cfg.seed,
                                    "model": cfg.model.name, "scheme": cfg.scheme, "set": cfg.dset.name,
                                    "abscissa": "tau"})
    for t in taus:
        stat = _nested(cfg, _nested_schedule(cfg, level, t, k), n_outer, n_inner, threads)
        table.add_row(t, float(stat.mean()), float(stat.std(ddof=1) / math.sqrt(n_outer)), n_outer)
    return table


def _joint_fit(deltas, taus, grid, se):
    """``log stat = c + a log delta + b log tau`` over cells with stderr < 20%."""
    rows, rhs = [], []
    for i, t in enumerate(taus):
        for j, d in enumerate(deltas):
            if grid[i, j] > 0 and se[i, j] < 0.2 * grid[i, j]:
                rows.append([1.0, math.log(d), math.log(t)])
                rhs.append(math.log(grid[i, j]))
    if len(rows) < 3:
        return math.nan, math.nan
    coef = np.linalg.lstsq(np.asarray(rows), np.asarray(rhs), rcond=None)[0]
    return float(coef[1]), float(coef[2])


def cond_density_study(taus, deltas, n_outer: int, cfg: EstimatorConfig, n_inner: int = 64,
                       level: int = 0, threads: int | None = None) -> StudyTable:
    """Nested estimate of ``E[P(dist(X_1) <= delta | F_{1-tau})^2]``.

    ``X_1`` is scored on the fine path alone; with ``scheme='exact'`` (GBM)
    the level only sets where the exact steps land.  Rows are indexed by
    ``tau``; the statistic is the smallest ``delta`` and every ``delta`` has
    its own ``d=<delta>`` column.  Joint exponents go into the metadata.
    """
    k = _check_pow2(n_inner)
    taus = [float(t) for t in taus]
    deltas = sorted(float(d) for d in deltas)
    if not taus or not deltas or min(taus) <= 0 or max(taus) >= 1 or deltas[0] <= 0:
        raise ValueError("need tau in (0, 1) and positive deltas")
    grid = np.zeros((len(taus), len(deltas)))
    se = np.zeros_like(grid)
    for i, t in enumerate(taus):
        sched = _nested_schedule(cfg, level, t, k)
        for j, d in enumerate(deltas):
            stat = _nested(cfg, sched, n_outer, n_inner, threads, band=d, coarse=False)
            grid[i, j] = stat.mean()
            se[i, j] = stat.std(ddof=1) / math.sqrt(n_outer)
    a, b = _joint_fit(deltas, taus, grid, se)
    table = StudyTable("cond-density", meta={
        "level": level, "n_inner": n_inner, "seed": cfg.seed, "model": cfg.model.name, "scheme": cfg.scheme,
        "set": cfg.dset.name, "abscissa": "tau", "deltas": " ".join(repr(d) for d in deltas),
        "exponent_delta": a, "exponent_tau": b})
    for i, t in enumerate(taus):
        cols = {}
        for j, d in enumerate(deltas):
            cols[f"d={d!r}"] = grid[i, j]
            cols[f"d={d!r}_se"] = se[i, j]
        table.add_row(t, grid[i, 0], se[i, 0], n_outer, **cols)
    return table


def work_estimate(result) -> float:
    """``sum_l N_l W_l`` with ``N_l`` from the optimal allocation on the final estimates of ``V_l, W_l``."""
    V = np.array([s.variance for s in result.levels])
    W = np.array([s.mean_work for s in result.levels])
    return float(np.sum(allocate_samples(V, W, result.eps) * W))


def complexity_sweep(eps_list, configs: dict[str, EstimatorConfig], levels: LevelConfig | None = None,
                     threads: int | None = None) -> StudyTable:
    """Adaptive MLMC per tolerance; reports ``work * eps^2`` per configuration.

    ``work`` is the allocation estimate ``sum N_l W_l`` at the final level
    statistics, which excludes warm-up surplus; the realised work is kept in
    the ``.work_run`` column.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps grid must be strictly decreasing")
    levels = levels or LevelConfig()
    labels = list(configs)
    table = StudyTable("complexity", meta={"abscissa": "eps", "primary": labels[0], "warmup": levels.warmup,
                                           "alpha": levels.alpha, "max_level": levels.max_level})
    for eps in eps_list:
        row = {}
        for label, cfg in configs.items():
            res = run_mlmc(eps, levels, cfg, threads)
            row[f"{label}.work_eps2"] = work_estimate(res) * eps**2
            row[f"{label}.work_run"] = res.total_work
            row[f"{label}.L"] = res.L
            row[f"{label}.estimate"] = res.estimate
            row[f"{label}.unconverged"] = float(res.bias_unconverged)
        table.add_row(eps, row[f"{labels[0]}.work_eps2"], 0.0, 0, **row)
    return table
