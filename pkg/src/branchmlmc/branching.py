"""Branching path trees: schedules, the tree walk and its work count."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .digital_sets import DigitalSet
from .kernels import segment_draws, walk_batch
from .rng import MAX_DEPTH, StreamKey, standard_normal
from .schemes import ANTITHETIC_CC, check_compatible, scheme_code
from .sde_models import ModelSpec

SPLIT = "split"
SNAP = "snap"

# Guards floor() against 2.9999999999999996-style round-off in log ratios and
# decides when a branch time already sits on the fine grid.
_EPS = 1e-9


@dataclass(frozen=True)
class BranchIndex:
    """A node ``u`` in ``{-1, +1}^depth``; bit ``j`` of ``code`` is 1 for ``u_j = +1``."""

    depth: int = 0
    code: int = 0

    def __post_init__(self):
        if not 0 <= self.depth <= MAX_DEPTH or self.code >> self.depth:
            raise ValueError(f"invalid branch index depth={self.depth} code={self.code}")

    @classmethod
    def from_symbols(cls, symbols) -> "BranchIndex":
        code = 0
        for j, s in enumerate(symbols):
            if s not in (1, -1):
                raise ValueError("symbols must be +1 or -1")
            code |= (s == 1) << j
        return cls(len(symbols), code)

    def symbols(self) -> tuple[int, ...]:
        return tuple(1 if (self.code >> j) & 1 else -1 for j in range(self.depth))

    def child(self, s: int) -> "BranchIndex":
        if s not in (1, -1):
            raise ValueError("child must be +1 or -1")
        return BranchIndex(self.depth + 1, self.code | ((s == 1) << self.depth))

    def parent(self) -> "BranchIndex":
        if self.depth == 0:
            raise ValueError("root has no parent")
        return BranchIndex(self.depth - 1, self.code & ((1 << (self.depth - 1)) - 1))

    def meet_depth(self, other: "BranchIndex") -> int:
        """Length of the longest common prefix."""
        n = min(self.depth, other.depth)
        x = (self.code ^ other.code) & ((1 << n) - 1)
        return n if x == 0 else (x & -x).bit_length() - 1

    @classmethod
    def from_leaf_position(cls, i: int, depth: int) -> "BranchIndex":
        """Leaf visited ``i``-th by the depth-first walk."""
        code = 0
        for j in range(depth):
            code |= ((i >> (depth - 1 - j)) & 1) << j
        return cls(depth, code)


def compute_depth(h: float, tau0: float, eta: float) -> int:
    """Number of branch events ``max(0, floor(log2(tau0 / h) / eta))``."""
    if not 0.0 < tau0 < 1.0:
        raise ValueError(f"tau0 must lie in (0, 1), got {tau0}")
    if not eta > 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    if not 0.0 < h <= 1.0:
        raise ValueError(f"h must lie in (0, 1], got {h}")
    return max(0, math.floor(math.log2(tau0 / h) / eta + _EPS))


def fine_steps(level: int, h0: float = 0.5, M: int = 2) -> int:
    n0 = round(1.0 / h0)
    if abs(n0 * h0 - 1.0) > 1e-12 or M < 2:
        raise ValueError("need 1/h0 integer and M >= 2")
    return n0 * M**level


@dataclass(frozen=True)
class BranchSchedule:
    level: int
    n_fine: int
    tau0: float = 0.5
    eta: float = 1.0
    align: str = SPLIT
    M: int = 2
    depth: int = field(init=False)
    events: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.align not in (SPLIT, SNAP):
            raise ValueError(f"align must be {SPLIT!r} or {SNAP!r}")
        depth = compute_depth(self.h, self.tau0, self.eta)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "events", self._events(depth))

    @classmethod
    def unbranched(cls, level: int, n_fine: int, M: int = 2) -> "BranchSchedule":
        """Single particle, i.e. the plain level difference."""
        sched = cls(level, n_fine, tau0=0.5, eta=1.0, M=M)
        object.__setattr__(sched, "depth", 0)
        object.__setattr__(sched, "events", np.zeros(0))
        return sched

    @classmethod
    def from_events(cls, level: int, n_fine: int, events, M: int = 2) -> "BranchSchedule":
        """Schedule with explicit branch times (fine-step units); used by nested studies."""
        ev = np.asarray(events, dtype=float)
        if ev.ndim != 1 or np.any(np.diff(ev) < 0) or np.any(ev < 0) or np.any(ev > n_fine):
            raise ValueError("events must be non-decreasing within [0, n_fine]")
        sched = cls(level, n_fine, M=M)
        object.__setattr__(sched, "depth", ev.shape[0])
        object.__setattr__(sched, "events", ev)
        return sched

    @property
    def h(self) -> float:
        return 1.0 / self.n_fine

    @property
    def taus(self) -> np.ndarray:
        return self.tau0 * 2.0 ** (-self.eta * np.arange(self.depth))

    @property
    def branch_times(self) -> np.ndarray:
        return self.events / self.n_fine

    @property
    def n_leaves(self) -> int:
        return 1 << self.depth

    @property
    def collisions(self) -> int:
        """Branch events that landed on the same time as the previous one."""
        return int(np.sum(np.diff(self.events) == 0)) if self.depth > 1 else 0

    def _events(self, depth):
        t = (1.0 - self.tau0 * 2.0 ** (-self.eta * np.arange(depth))) * self.n_fine
        if self.align == SNAP:
            grid = self.M if self.level > 0 else 1
            return np.minimum(np.floor(t / grid + 0.5) * grid, float(self.n_fine))
        near = np.round(t)
        return np.where(np.abs(t - near) < _EPS, near, t)

    def segment_bounds(self):
        start = np.concatenate([[0.0], self.events])
        end = np.concatenate([self.events, [float(self.n_fine)]])
        return start, end


def segment_times(schedule: BranchSchedule) -> np.ndarray:
    """Ordered partition ``0 < 1 - tau_0 < ... < 1`` with duplicates collapsed."""
    pts = np.concatenate([[0.0], schedule.branch_times, [1.0]])
    return np.unique(pts)


def tree_work(schedule: BranchSchedule) -> int:
    """Closed-form increment count: sum over segments of live particles x draws."""
    start, end = schedule.segment_bounds()
    return int(sum((1 << k) * segment_draws(float(s), float(e)) for k, (s, e) in enumerate(zip(start, end))))


def pair_meet_census(depth: int) -> dict[int, int]:
    """Ordered pairs ``u != v`` of leaves at ``depth`` grouped by meet depth."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return {m: 2 ** (2 * depth - m - 1) for m in range(depth)}


@dataclass(frozen=True)
class LeafOutcome:
    index: BranchIndex
    fine: np.ndarray
    coarse: np.ndarray | None
    antithetic: np.ndarray | None
    increments: int


@dataclass
class WorkCounter:
    increments_generated: int = 0

    def add(self, n: int) -> None:
        if n < 0:
            raise ValueError("work is non-decreasing")
        self.increments_generated += n


def run_batch(model: ModelSpec, scheme: str, dset: DigitalSet, schedule: BranchSchedule,
              rep_start: int, n_rep: int, seed: int, band: float = -1.0, leaves: bool = False,
              coarse: bool | None = None):
    """Walk ``n_rep`` trees; returns per-replicate leaf sums of ``dP`` and ``dP**2``, work, leaf states.

    ``coarse=False`` scores the fine path alone at any level (``band >= 0``
    swaps the payoff for the boundary-neighbourhood indicator).
    """
    has_coarse = schedule.level > 0 if coarse is None else bool(coarse)
    code = scheme_code(scheme)
    check_compatible(model, scheme)
    if code == ANTITHETIC_CC:
        if schedule.M != 2:
            raise ValueError("antithetic-cc needs refinement factor M=2")
        if schedule.depth and np.any(np.mod(schedule.events, 2) != 0) and schedule.level > 0:
            raise ValueError("antithetic-cc needs branch times snapped to the coarse grid (align=snap)")
    if has_coarse and schedule.n_fine % schedule.M:
        raise ValueError("fine grid is not a refinement of the coarse grid")
    s1 = np.zeros(n_rep)
    s2 = np.zeros(n_rep)
    work = np.zeros(n_rep, dtype=np.int64)
    shape = (n_rep, schedule.n_leaves, 3, model.d) if leaves else (0, 0, 0, 0)
    out = np.full(shape, np.nan)
    if n_rep:
        walk_batch(model.code, model.d, model.noise_channels, model.kernel_params(), model.x0.astype(float),
                   code, schedule.level, schedule.n_fine, schedule.M, has_coarse,
                   schedule.events.astype(float), np.uint64(seed), rep_start, n_rep, dset.code,
                   float(dset.threshold), float(band), s1, s2, work, out, leaves)
    return s1, s2, work, out


def simulate_tree(level: int, model: ModelSpec, scheme: str, dset: DigitalSet,
                  schedule: BranchSchedule, replicate: int, seed: int):
    """All ``2**depth`` leaves of one replicate, in depth-first order, plus the work counter."""
    if schedule.level != level:
        raise ValueError("schedule built for a different level")
    _, _, work, out = run_batch(model, scheme, dset, schedule, replicate, 1, seed, leaves=True)
    start, end = schedule.segment_bounds()
    path_draws = int(sum(segment_draws(float(s), float(e)) for s, e in zip(start, end)))
    has_coarse = level > 0
    anti = scheme_code(scheme) == ANTITHETIC_CC
    result = []
    for i in range(schedule.n_leaves):
        result.append(LeafOutcome(
            index=BranchIndex.from_leaf_position(i, schedule.depth),
            fine=out[0, i, 0].copy(),
            coarse=out[0, i, 1].copy() if has_coarse else None,
            antithetic=out[0, i, 2].copy() if (anti and has_coarse) else None,
            increments=path_draws,
        ))
    counter = WorkCounter()
    counter.add(int(work[0]))
    return result, counter


def leaf_increments(schedule: BranchSchedule, leaf: BranchIndex, replicate: int, seed: int,
                    channels: int) -> np.ndarray:
    """Fine-step increments seen by ``leaf``, rebuilt key by key from :func:`standard_normal`.

    Reproduces the walker's arithmetic (pieces of a cut step are summed in
    draw order) so replayed paths match bitwise.
    """
    if leaf.depth != schedule.depth:
        raise ValueError("leaf depth differs from schedule depth")
    h = schedule.h
    sqrt_h = math.sqrt(h)
    out = np.zeros((schedule.n_fine, channels))
    pend = np.zeros(channels)
    done = 0
    start, end = schedule.segment_bounds()
    node = BranchIndex()
    for k, (pos, stop) in enumerate(zip(start, end)):
        if k > 0:
            node = node.child(leaf.symbols()[k - 1])
        j = 0
        while pos < stop:
            nxt = math.floor(pos) + 1.0
            pe = min(stop, nxt)
            scale = sqrt_h if pe - pos == 1.0 else math.sqrt((pe - pos) * h)
            for c in range(channels):
                key = StreamKey(seed, schedule.level, replicate, node.code, node.depth, k, j, c)
                pend[c] += scale * standard_normal(key)
            j += 1
            if pe == nxt:
                out[done] = pend
                pend[:] = 0.0
                done += 1
            pos = pe
    return out
