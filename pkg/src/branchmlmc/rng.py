"""Counter-based normal streams addressed by a structured key.

Every Brownian increment in the package is a pure function of a
:class:`StreamKey`.  Nothing carries generator state, so a tree of paths can
be replayed in any order and replicates can be split across threads without
changing a single bit of output.

Construction
------------
Two Philox4x32-10 evaluations, both keyed by the 64-bit master seed:

1. *node block*: counter ``(replicate_lo, replicate_hi, node_lo, node_hi)``
   where ``node = 2**depth | branch_code`` (the sentinel bit makes
   ``(depth, branch_code)`` injective).  Philox is a bijection of the counter
   for a fixed key, so distinct ``(replicate, branch)`` pairs give distinct
   128-bit blocks.
2. *draw block*: the node block with ``step`` xored into word 0 and
   ``channel // 2 | segment << 8 | level << 16`` xored into word 1.

Lanes 0-1 of the draw block feed channel ``2p`` and lanes 2-3 feed channel
``2p + 1``.  A lane pair becomes a 53-bit uniform ``(x + 1/2) 2**-53`` which
is mapped to a normal by Wichura's AS241 (PPND16) rational approximation,
accurate to about 1e-16 relative.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._accel import HAS_NUMBA, njit

MAX_DEPTH = 63

_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = 0xFFFFFFFF

# AS241 PPND16 coefficients.
_A = (3.387132872796366608, 133.14166789178437745, 1971.5909503065514427,
      13731.693765509461125, 45921.953931549871457, 67265.770927008700853,
      33430.575583588128105, 2509.0809287301226727)
_B = (1.0, 42.313330701600911252, 687.1870074920579083, 5394.1960214247511077,
      21213.794301586595867, 39307.89580009271061, 28729.085735721942674,
      5226.495278852545925)
_C = (1.42343711074968357734, 4.6303378461565452959, 5.7694972214606914055,
      3.64784832476320460504, 1.27045825245236838258, 0.24178072517745061177,
      0.0227238449892691845833, 7.7454501427834140764e-4)
_D = (1.0, 2.05319162663775882187, 1.6763848301838038494, 0.68976733498510000455,
      0.14810397642748007459, 0.0151986665636164571966, 5.475938084995344946e-4,
      1.05075007164441684324e-9)
_E = (6.6579046435011037772, 5.4637849111641143699, 1.7848265399172913358,
      0.29656057182850489123, 0.026532189526576123093, 0.0012426609473880784386,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 0.59983220655588793769, 0.13692988092273580531, 0.0148753612908506148525,
      7.868691311456132591e-4, 1.8463183175100546818e-5, 1.4215117583164458887e-7,
      2.04426310338993978564e-15)


@dataclass(frozen=True)
class StreamKey:
    master_seed: int = 0
    level: int = 0
    replicate: int = 0
    branch_code: int = 0
    depth: int = 0
    segment: int = 0
    step: int = 0
    channel: int = 0

    def __post_init__(self):
        if not 0 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"branch depth {self.depth} outside [0, {MAX_DEPTH}]")
        if self.branch_code >> self.depth:
            raise ValueError("branch_code has bits above its depth")
        if not 0 <= self.level < 256 or not 0 <= self.segment < 256 or not 0 <= self.channel < 512:
            raise ValueError("level, segment or channel out of range")
        if not 0 <= self.step < 2**32:
            raise ValueError("step must fit in 32 bits")


def child_key(parent: StreamKey, child: int) -> StreamKey:
    """Key of the first increment of child ``child`` (+1 or -1) of ``parent``."""
    if child not in (1, -1):
        raise ValueError("child must be +1 or -1")
    if parent.depth >= MAX_DEPTH:
        raise OverflowError(f"cannot branch below depth {MAX_DEPTH}")
    code = parent.branch_code | ((1 if child == 1 else 0) << parent.depth)
    return replace(parent, branch_code=code, depth=parent.depth + 1,
                   segment=parent.segment + 1, step=0)


def node_word(branch_code: int, depth: int) -> int:
    return (1 << depth) | branch_code


# ---------------------------------------------------------------------------
# scalar kernels (compiled when numba is present)
# ---------------------------------------------------------------------------

@njit
def _philox(c0, c1, c2, c3, k0, k1):
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    w0 = np.uint64(_W0)
    w1 = np.uint64(_W1)
    mask = np.uint64(_MASK32)
    s32 = np.uint64(32)
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        n0 = ((p1 >> s32) ^ c1 ^ k0) & mask
        n1 = p1 & mask
        n2 = ((p0 >> s32) ^ c3 ^ k1) & mask
        n3 = p0 & mask
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + w0) & mask
        k1 = (k1 + w1) & mask
    return c0, c1, c2, c3


@njit
def _ppnd16(p):
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((_A[7] * r + _A[6]) * r + _A[5]) * r + _A[4]) * r + _A[3]) * r
                 + _A[2]) * r + _A[1]) * r + _A[0])
        den = (((((((_B[7] * r + _B[6]) * r + _B[5]) * r + _B[4]) * r + _B[3]) * r
                 + _B[2]) * r + _B[1]) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((_C[7] * r + _C[6]) * r + _C[5]) * r + _C[4]) * r + _C[3]) * r
                 + _C[2]) * r + _C[1]) * r + _C[0])
        den = (((((((_D[7] * r + _D[6]) * r + _D[5]) * r + _D[4]) * r + _D[3]) * r
                 + _D[2]) * r + _D[1]) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((_E[7] * r + _E[6]) * r + _E[5]) * r + _E[4]) * r + _E[3]) * r
                 + _E[2]) * r + _E[1]) * r + _E[0])
        den = (((((((_F[7] * r + _F[6]) * r + _F[5]) * r + _F[4]) * r + _F[3]) * r
                 + _F[2]) * r + _F[1]) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit
def _lanes_to_normal(hi, lo):
    x = ((hi << np.uint64(32)) | lo) >> np.uint64(11)
    u = (np.float64(x) + 0.5) * 1.1102230246251565e-16
    return _ppnd16(u)


@njit
def node_block(seed, replicate, node):
    """128-bit block identifying one branch of one replicate."""
    mask = np.uint64(_MASK32)
    s32 = np.uint64(32)
    seed = np.uint64(seed)
    replicate = np.uint64(replicate)
    node = np.uint64(node)
    return _philox(replicate & mask, replicate >> s32, node & mask, node >> s32,
                   seed & mask, seed >> s32)


@njit
def normal_pair(seed, r0, r1, r2, r3, level, segment, step, pair):
    """Normals for channels ``2*pair`` and ``2*pair + 1`` at one step."""
    mask = np.uint64(_MASK32)
    s32 = np.uint64(32)
    seed = np.uint64(seed)
    tag = np.uint64(pair) | (np.uint64(segment) << np.uint64(8)) | (np.uint64(level) << np.uint64(16))
    o0, o1, o2, o3 = _philox(r0 ^ (np.uint64(step) & mask), r1 ^ tag, r2, r3,
                             seed & mask, seed >> s32)
    return _lanes_to_normal(o0, o1), _lanes_to_normal(o2, o3)


@njit
def normal_one(seed, r0, r1, r2, r3, level, segment, step, pair):
    """First normal of :func:`normal_pair` (channel ``2*pair``) without the second lane."""
    mask = np.uint64(_MASK32)
    s32 = np.uint64(32)
    seed = np.uint64(seed)
    tag = np.uint64(pair) | (np.uint64(segment) << np.uint64(8)) | (np.uint64(level) << np.uint64(16))
    o0, o1, o2, o3 = _philox(r0 ^ (np.uint64(step) & mask), r1 ^ tag, r2, r3,
                             seed & mask, seed >> s32)
    return _lanes_to_normal(o0, o1)


def standard_normal(key: StreamKey) -> float:
    """Deterministic N(0, 1) variate for ``key``."""
    if HAS_NUMBA:
        # numba turns mixed int64/uint64 arithmetic into float64, so cast up front
        seed = np.uint64(key.master_seed)
        r = node_block(seed, np.uint64(key.replicate), np.uint64(node_word(key.branch_code, key.depth)))
        r0, r1, r2, r3 = (np.uint64(v) for v in r)
        z = normal_pair(seed, r0, r1, r2, r3, key.level, key.segment, key.step, key.channel // 2)
        return float(z[key.channel % 2])
    z = normals_np(key.master_seed, np.array([key.replicate], dtype=np.uint64),
                   node_word(key.branch_code, key.depth), key.level, key.segment,
                   key.step, key.channel // 2)
    return float(z[key.channel % 2][0])


# ---------------------------------------------------------------------------
# vectorised numpy versions (used by the numpy backend)
# ---------------------------------------------------------------------------

def _philox_np(c0, c1, c2, c3, k0, k1):
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    mask = np.uint64(_MASK32)
    s32 = np.uint64(32)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        c0, c1, c2, c3 = ((p1 >> s32) ^ c1 ^ k0) & mask, p1 & mask, ((p0 >> s32) ^ c3 ^ k1) & mask, p0 & mask
        k0 = (k0 + np.uint64(_W0)) & mask
        k1 = (k1 + np.uint64(_W1)) & mask
    return c0, c1, c2, c3


def _poly(coef, r):
    out = np.full_like(r, coef[7])
    for c in coef[6::-1]:
        out = out * r + c
    return out


def ppnd16_np(p):
    """Vectorised AS241 inverse normal CDF."""
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    out = np.empty_like(p)
    central = np.abs(q) <= 0.425
    if central.any():
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _poly(_A, r) / _poly(_B, r)
    tail = ~central
    if tail.any():
        qt = q[tail]
        r = np.where(qt < 0.0, p[tail], 1.0 - p[tail])
        r = np.sqrt(-np.log(r))
        val = np.empty_like(r)
        mid = r <= 5.0
        rm = r[mid] - 1.6
        val[mid] = _poly(_C, rm) / _poly(_D, rm)
        rf = r[~mid] - 5.0
        val[~mid] = _poly(_E, rf) / _poly(_F, rf)
        out[tail] = np.where(qt < 0.0, -val, val)
    return out


def _lanes_to_normal_np(hi, lo):
    x = ((hi << np.uint64(32)) | lo) >> np.uint64(11)
    return ppnd16_np((x.astype(np.float64) + 0.5) * 1.1102230246251565e-16)


def node_block_np(seed, replicates, node):
    mask = np.uint64(_MASK32)
    s32 = np.uint64(32)
    seed = np.uint64(seed)
    node = np.uint64(node)
    reps = np.asarray(replicates, dtype=np.uint64)
    c2 = np.full_like(reps, node & mask)
    c3 = np.full_like(reps, node >> s32)
    return _philox_np(reps & mask, reps >> s32, c2, c3, seed & mask, seed >> s32)


def normal_pair_np(seed, block, level, segment, step, pair):
    mask = np.uint64(_MASK32)
    s32 = np.uint64(32)
    seed = np.uint64(seed)
    tag = np.uint64(pair) | (np.uint64(segment) << np.uint64(8)) | (np.uint64(level) << np.uint64(16))
    r0, r1, r2, r3 = block
    o0, o1, o2, o3 = _philox_np(r0 ^ (np.uint64(step) & mask), r1 ^ tag, r2, r3,
                                seed & mask, seed >> s32)
    return _lanes_to_normal_np(o0, o1), _lanes_to_normal_np(o2, o3)


def normals_np(seed, replicates, node, level, segment, step, pair):
    return normal_pair_np(seed, node_block_np(seed, replicates, node), level, segment, step, pair)
