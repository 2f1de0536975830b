"""Level differences ``dP`` and the branching average over a tree's leaves."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .branching import SNAP, SPLIT, BranchSchedule, fine_steps, run_batch, simulate_tree
from .digital_sets import DigitalSet, get_set
from .parallel import DEFAULT_SHARD, map_replicates
from .schemes import ANTITHETIC_CC, check_compatible, scheme_code
from .sde_models import ModelSpec, get_model


def delta_p_plain(fine, coarse, dset: DigitalSet) -> float:
    """``1{fine in S} - 1{coarse in S}``; ``coarse=None`` gives the level-0 indicator."""
    f = float(dset.contains(fine))
    return f if coarse is None else f - float(dset.contains(coarse))


def delta_p_antithetic(fine, anti, coarse, dset: DigitalSet) -> float:
    if coarse is None:
        return float(dset.contains(fine))
    return 0.5 * (float(dset.contains(fine)) + float(dset.contains(anti))) - float(dset.contains(coarse))


@dataclass(frozen=True)
class LevelSample:
    value: float
    work: int

    def __post_init__(self):
        if abs(self.value) > 1.0:
            raise ValueError("level sample outside [-1, 1]")


def branching_sample(level: int, model: ModelSpec, scheme: str, dset: DigitalSet,
                     schedule: BranchSchedule, replicate: int, seed: int) -> LevelSample:
    """Mean of ``dP`` over the leaves of one tree, recomputed from the leaf states."""
    leaves, work = simulate_tree(level, model, scheme, dset, schedule, replicate, seed)
    if scheme_code(scheme) == ANTITHETIC_CC:
        vals = [delta_p_antithetic(o.fine, o.antithetic, o.coarse, dset) for o in leaves]
    else:
        vals = [delta_p_plain(o.fine, o.coarse, dset) for o in leaves]
    return LevelSample(float(np.mean(vals)), work.increments_generated)


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything needed to draw i.i.d. samples of one level's estimator.

    ``branching=False`` gives the plain single-pair difference.  ``align``
    defaults to ``snap`` for the antithetic scheme and ``split`` otherwise.
    """

    model: ModelSpec
    scheme: str = "euler"
    dset: DigitalSet = get_set("gbm-mean-below")
    branching: bool = True
    tau0: float = 0.5
    eta: float = 1.0
    align: str | None = None
    h0: float = 0.5
    M: int = 2
    seed: int = 0
    threads: int | None = None
    shard: int = DEFAULT_SHARD

    def __post_init__(self):
        check_compatible(self.model, self.scheme)
        if self.align not in (None, SPLIT, SNAP):
            raise ValueError(f"align must be split or snap, got {self.align!r}")
        if scheme_code(self.scheme) == ANTITHETIC_CC and self.branching and self.resolved_align != SNAP:
            raise ValueError("scheme 'antithetic-cc' requires branch.align = snap")
        fine_steps(0, self.h0, self.M)

    @property
    def resolved_align(self) -> str:
        if self.align is not None:
            return self.align
        return SNAP if scheme_code(self.scheme) == ANTITHETIC_CC else SPLIT

    def with_(self, **kw) -> "EstimatorConfig":
        return replace(self, **kw)

    def h(self, level: int) -> float:
        return self.h0 * float(self.M) ** (-level)

    def schedule(self, level: int) -> BranchSchedule:
        n = fine_steps(level, self.h0, self.M)
        if not self.branching:
            return BranchSchedule.unbranched(level, n, self.M)
        return BranchSchedule(level, n, self.tau0, self.eta, self.resolved_align, self.M)

    def sample_level(self, level: int, rep_start: int, n: int, threads: int | None = None):
        """Values of the level estimator and their work for replicates ``rep_start..rep_start+n-1``."""
        sched = self.schedule(level)
        inv = 1.0 / sched.n_leaves

        def shard(s, m):
            s1, _, work, _ = run_batch(self.model, self.scheme, self.dset, sched, s, m, self.seed)
            return s1 * inv, work

        out = map_replicates(shard, rep_start, n, threads or self.threads, self.shard)
        if out is None:
            return np.zeros(0), np.zeros(0, dtype=np.int64)
        return out


def make_config(model: str = "gbm", scheme: str = "euler", dset: str | None = None, **kw) -> EstimatorConfig:
    """Convenience constructor from registry names."""
    spec = get_model(model, kw.pop("gbm_params", None))
    if dset is None:
        dset = "gbm-mean-below" if model == "gbm" else "cc-corner"
    return EstimatorConfig(model=spec, scheme=scheme, dset=get_set(dset, kw.pop("threshold", None)), **kw)
