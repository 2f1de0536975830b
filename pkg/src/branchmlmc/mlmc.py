"""Multilevel driver: moment accumulation, sample allocation and level selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import EstimatorConfig

log = logging.getLogger(__name__)


@dataclass
class MomentAccumulator:
    """Power sums of samples ``y`` plus their total work."""

    n: int = 0
    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0
    s4: float = 0.0
    work: float = 0.0

    def add(self, y, work=None) -> "MomentAccumulator":
        y = np.asarray(y, dtype=float)
        y2 = y * y
        self.n += y.size
        self.s1 += float(np.sum(y))
        self.s2 += float(np.sum(y2))
        self.s3 += float(np.sum(y2 * y))
        self.s4 += float(np.sum(y2 * y2))
        if work is not None:
            self.work += float(np.sum(work))
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        return MomentAccumulator(self.n + other.n, self.s1 + other.s1, self.s2 + other.s2,
                                 self.s3 + other.s3, self.s4 + other.s4, self.work + other.work)

    @property
    def mean(self) -> float:
        return self.s1 / self.n if self.n else math.nan

    @property
    def variance(self) -> float:
        """Unbiased sample variance, clipped at 0."""
        if self.n < 2:
            return math.nan
        return max(0.0, (self.s2 - self.s1 * self.s1 / self.n) / (self.n - 1))

    @property
    def mean_work(self) -> float:
        return self.work / self.n if self.n else math.nan

    def central(self) -> tuple[float, float]:
        """Population central moments ``(m2, m4)``."""
        n = self.n
        m = self.s1 / n
        e2, e3, e4 = self.s2 / n, self.s3 / n, self.s4 / n
        m2 = e2 - m * m
        m4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m**4
        return m2, m4


def kurtosis(acc: MomentAccumulator) -> float:
    """``m4 / m2**2`` from central moments; NaN when undefined (n < 4 or zero variance)."""
    if acc.n < 4:
        return math.nan
    m2, m4 = acc.central()
    if m2 <= 1e-13 * max(acc.s2 / acc.n, 1e-300):
        return math.nan
    return max(m4, 0.0) / (m2 * m2)


def allocate_samples(V, W, eps: float) -> np.ndarray:
    """``N_l = ceil(2 eps^-2 sqrt(V_l / W_l) sum_k sqrt(W_k V_k))``, at least 1."""
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if np.any(V < 0) or np.any(W <= 0) or V.shape != W.shape:
        raise ValueError("need V >= 0 and W > 0 of equal length")
    total = np.sum(np.sqrt(W * V))
    n = np.ceil(2.0 / eps**2 * np.sqrt(V / W) * total)
    return np.maximum(n, 1).astype(np.int64)


@dataclass(frozen=True)
class LevelConfig:
    h0: float = 0.5
    M: int = 2
    max_level: int = 12
    min_level: int = 2
    alpha: float | None = 1.0
    warmup: int = 10_000

    def __post_init__(self):
        if self.M < 2 or self.h0 <= 0:
            raise ValueError("need M >= 2 and h0 > 0")
        if not 0 <= self.min_level <= self.max_level:
            raise ValueError("need 0 <= min_level <= max_level")
        if self.warmup < 2:
            raise ValueError("warmup must be >= 2")

    def h(self, level: int) -> float:
        return self.h0 * float(self.M) ** (-level)


@dataclass(frozen=True)
class LevelStats:
    level: int
    n: int
    mean: float
    variance: float
    mean_work: float
    kurtosis: float


@dataclass
class MlmcResult:
    estimate: float
    levels: list[LevelStats]
    L: int
    bias: float
    total_work: float
    eps: float
    alpha: float
    bias_unconverged: bool = False
    accumulators: list[MomentAccumulator] = field(default_factory=list, repr=False)

    @property
    def estimator_variance(self) -> float:
        return float(sum(s.variance / s.n for s in self.levels))


def fit_alpha(means, hs) -> float | None:
    """Weak-rate estimate from ``|mean_l|`` on levels >= 1; ``None`` below 4 usable levels."""
    m = np.abs(np.asarray(means[1:], dtype=float))
    h = np.asarray(hs[1:], dtype=float)
    ok = m > 0
    if ok.sum() < 4:
        return None
    slope = np.polyfit(np.log(h[ok]), np.log(m[ok]), 1)[0]
    return max(0.5, float(slope))


def run_mlmc(eps: float, levels: LevelConfig, est: EstimatorConfig, threads: int | None = None) -> MlmcResult:
    """Adaptive MLMC targeting RMSE ``eps``: variance <= eps^2/2 and bias proxy <= eps/sqrt(2)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    est = est.with_(h0=levels.h0, M=levels.M)
    L = levels.min_level
    accs = [MomentAccumulator() for _ in range(L + 1)]
    dn = np.full(L + 1, levels.warmup, dtype=np.int64)
    unconverged = False
    alpha = levels.alpha if levels.alpha is not None else 1.0
    while True:
        for lev in range(L + 1):
            if dn[lev] > 0:
                y, w = est.sample_level(lev, accs[lev].n, int(dn[lev]), threads)
                accs[lev].add(y, w)
        V = np.array([a.variance for a in accs])
        W = np.array([a.mean_work for a in accs])
        target = allocate_samples(V, W, eps)
        n = np.array([a.n for a in accs])
        dn = np.maximum(target - n, 0)
        if dn.any():
            continue
        if levels.alpha is None:
            fitted = fit_alpha([a.mean for a in accs], [levels.h(k) for k in range(L + 1)])
            alpha = fitted if fitted is not None else 1.0
        bias = abs(accs[L].mean) / (levels.M**alpha - 1.0)
        log.debug("L=%d bias=%.3g N=%s", L, bias, n.tolist())
        if bias <= eps / math.sqrt(2.0):
            break
        if L >= levels.max_level:
            unconverged = True
            break
        L += 1
        accs.append(MomentAccumulator())
        dn = np.append(dn, levels.warmup)

    stats = [LevelStats(k, a.n, a.mean, a.variance, a.mean_work, kurtosis(a)) for k, a in enumerate(accs)]
    return MlmcResult(
        estimate=float(sum(a.s1 / a.n for a in accs)),
        levels=stats, L=L, bias=bias, total_work=float(sum(a.work for a in accs)),
        eps=eps, alpha=alpha, bias_unconverged=unconverged, accumulators=accs,
    )
