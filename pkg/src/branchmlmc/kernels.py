"""Hot loop: depth-first walk of a branching path tree for a batch of replicates.

Two implementations with identical arithmetic order:

* ``walk_batch_numba`` loops over replicates and is compiled with numba;
* ``walk_batch_numpy`` walks one tree and vectorises across replicates.

``walk_batch`` picks one according to :mod:`branchmlmc._accel`.

Geometry
--------
Time is measured in fine steps, ``h = 1 / n_fine``.  ``events`` holds the
branch times (non-decreasing, fine-step units).  Segment ``k`` runs from
event ``k - 1`` (or 0) to event ``k`` (or ``n_fine``) and is walked by
particles of depth ``k``.  A fine step cut by a branch time is drawn in
pieces: the parent draws the part before the cut, each child draws its own
remainder, and the step is applied once its full increment is known.

Leaf ``i`` takes child ``+1`` at depth ``j`` when bit ``depth - 1 - j`` of
``i`` is set, so leaves come out in depth-first order; its branch code has
that choice in bit ``j``.
"""

from __future__ import annotations

import numpy as np

from ._accel import HAS_NUMBA, njit
from .digital_sets import indicator
from .rng import node_block, node_block_np, normal_one, normal_pair, normal_pair_np
from .schemes import ANTITHETIC_CC, cc_antithetic_inplace, cc_kernel_step, gbm_kernel_step
from .sde_models import CLARK_CAMERON, GBM


@njit
def _segment_bounds(events, n_fine):
    depth = events.shape[0]
    start = np.empty(depth + 1)
    end = np.empty(depth + 1)
    for k in range(depth + 1):
        start[k] = 0.0 if k == 0 else events[k - 1]
        end[k] = float(n_fine) if k == depth else events[k]
    return start, end


@njit
def segment_draws(start, end):
    """Number of increments drawn by one particle over ``[start, end]`` (fine units)."""
    n = 0
    pos = start
    while pos < end:
        nxt = np.floor(pos) + 1.0
        pos = end if end < nxt else nxt
        n += 1
    return n


@njit
def _walk_compiled(step, d, nch, params, x0, scheme, level, n_fine, m_ref, has_coarse,
                   events, seed, rep_start, n_rep, set_code, thr, band,
                   out_s1, out_s2, out_work, leaves, want_leaves):
    # ``step`` is a compiled function argument, so each model gets its own
    # specialisation with the step inlined.
    depth = events.shape[0]
    n_leaves = 1 << depth
    h = 1.0 / n_fine
    sqrt_h = np.sqrt(h)
    hc = h * m_ref
    anti = scheme == ANTITHETIC_CC
    seg_start, seg_end = _segment_bounds(events, n_fine)

    xf = np.empty(d)
    xc = np.empty(d)
    xa = np.empty(d)
    acc = np.zeros(nch)
    pend = np.zeros(nch)
    first = np.zeros(nch)
    nsave = max(depth, 1)
    s_xf = np.empty((nsave, d))
    s_xc = np.empty((nsave, d))
    s_xa = np.empty((nsave, d))
    s_acc = np.empty((nsave, nch))
    s_pend = np.empty((nsave, nch))
    s_first = np.empty((nsave, nch))
    s_done = np.zeros(nsave, dtype=np.int64)
    pcode = np.zeros(depth + 1, dtype=np.uint64)

    for r in range(n_rep):
        rep = rep_start + r
        s1 = 0.0
        s2 = 0.0
        work = 0
        n_done = 0
        for i in range(n_leaves):
            if i == 0:
                for c in range(d):
                    xf[c] = x0[c]
                    xc[c] = x0[c]
                    xa[c] = x0[c]
                for c in range(nch):
                    acc[c] = 0.0
                    pend[c] = 0.0
                    first[c] = 0.0
                n_done = 0
                k0 = 0
            else:
                diff = i ^ (i - 1)
                b = 0
                while diff > 1:
                    diff >>= 1
                    b += 1
                js = depth - 1 - b
                for c in range(d):
                    xf[c] = s_xf[js, c]
                    xc[c] = s_xc[js, c]
                    xa[c] = s_xa[js, c]
                for c in range(nch):
                    acc[c] = s_acc[js, c]
                    pend[c] = s_pend[js, c]
                    first[c] = s_first[js, c]
                n_done = s_done[js]
                k0 = js + 1

            for k in range(k0, depth + 1):
                if k > 0:
                    choice = np.uint64((i >> (depth - k)) & 1)
                    pcode[k] = pcode[k - 1] | (choice << np.uint64(k - 1))
                else:
                    pcode[0] = np.uint64(0)
                node = (np.uint64(1) << np.uint64(k)) | pcode[k]
                r0, r1, r2, r3 = node_block(seed, rep, node)

                pos = seg_start[k]
                end = seg_end[k]
                j = 0
                while pos < end:
                    nxt = np.floor(pos) + 1.0
                    pe = end if end < nxt else nxt
                    scale = sqrt_h if pe - pos == 1.0 else np.sqrt((pe - pos) * h)
                    p = 0
                    while 2 * p < nch:
                        if 2 * p + 1 < nch:
                            z0, z1 = normal_pair(seed, r0, r1, r2, r3, level, k, j, p)
                            pend[2 * p] += scale * z0
                            pend[2 * p + 1] += scale * z1
                        else:
                            pend[2 * p] += scale * normal_one(seed, r0, r1, r2, r3, level, k, j, p)
                        p += 1
                    j += 1
                    work += 1
                    if pe == nxt:
                        # n_done counts fine steps inside the current coarse step
                        if has_coarse:
                            if anti:
                                if n_done == 0:
                                    for c in range(nch):
                                        first[c] = pend[c]
                                else:
                                    cc_antithetic_inplace(xa, first, pend)
                            for c in range(nch):
                                acc[c] += pend[c]
                            n_done += 1
                            if n_done == m_ref:
                                step(xc, acc, hc, params, d, scheme)
                                for c in range(nch):
                                    acc[c] = 0.0
                                n_done = 0
                        step(xf, pend, h, params, d, scheme)
                        for c in range(nch):
                            pend[c] = 0.0
                    pos = pe

                if k < depth:
                    for c in range(d):
                        s_xf[k, c] = xf[c]
                        s_xc[k, c] = xc[c]
                        s_xa[k, c] = xa[c]
                    for c in range(nch):
                        s_acc[k, c] = acc[c]
                        s_pend[k, c] = pend[c]
                        s_first[k, c] = first[c]
                    s_done[k] = n_done

            for c in range(d):
                if not np.isfinite(xf[c]) or not np.isfinite(xc[c]) or not np.isfinite(xa[c]):
                    raise FloatingPointError("non-finite path state at leaf")
            v = indicator(set_code, xf, d, thr, band)
            if has_coarse:
                pc = indicator(set_code, xc, d, thr, band)
                if anti:
                    v = 0.5 * (v + indicator(set_code, xa, d, thr, band)) - pc
                else:
                    v = v - pc
            s1 += v
            s2 += v * v
            if want_leaves:
                for c in range(d):
                    leaves[r, i, 0, c] = xf[c]
                    leaves[r, i, 1, c] = xc[c]
                    leaves[r, i, 2, c] = xa[c]
        out_s1[r] = s1
        out_s2[r] = s2
        out_work[r] = work


def walk_batch_numba(model, d, nch, params, x0, scheme, level, n_fine, m_ref, has_coarse,
                     events, seed, rep_start, n_rep, set_code, thr, band,
                     out_s1, out_s2, out_work, leaves, want_leaves):
    step = gbm_kernel_step if model == GBM else cc_kernel_step
    _walk_compiled(step, d, nch, params, x0, scheme, level, n_fine, m_ref, has_coarse,
                   events, seed, rep_start, n_rep, set_code, thr, band,
                   out_s1, out_s2, out_work, leaves, want_leaves)


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _step_np(model, x, db, h, params, d, scheme):
    from .schemes import EULER, EXACT, MILSTEIN

    if model == GBM:
        rho = params[0]
        sys_w = np.sqrt(1.0 - rho * rho)
        for i in range(d):
            b = db[:, 0] if d == 1 else rho * db[:, i + 1] + sys_w * db[:, 0]
            mu = params[1 + i]
            sig = params[1 + d + i]
            xi = x[:, i]
            if scheme == EXACT:
                x[:, i] = xi * np.exp((mu - 0.5 * sig * sig) * h + sig * b)
            elif scheme == MILSTEIN:
                x[:, i] = xi + mu * xi * h + sig * xi * b + 0.5 * sig * sig * xi * (b * b - h)
            else:
                x[:, i] = xi + mu * xi * h + sig * xi * b
    elif model == CLARK_CAMERON:
        if scheme == EULER:
            x[:, 1] = x[:, 1] + x[:, 0] * db[:, 1]
        else:
            x[:, 1] = x[:, 1] + x[:, 0] * db[:, 1] + 0.5 * db[:, 0] * db[:, 1]
        x[:, 0] = x[:, 0] + db[:, 0]


def _antithetic_np(xa, first, second):
    w1 = xa[:, 0].copy()
    x2 = xa[:, 1] + w1 * second[:, 1] + 0.5 * second[:, 0] * second[:, 1]
    x2 = x2 + (w1 + second[:, 0]) * first[:, 1] + 0.5 * first[:, 0] * first[:, 1]
    xa[:, 1] = x2
    xa[:, 0] = w1 + second[:, 0] + first[:, 0]


def _indicator_vec(code, x, d, thr, band):
    from . import digital_sets as ds

    if band >= 0.0:
        if code == ds.MEAN_BELOW:
            s = np.zeros(x.shape[0])
            for i in range(d):
                s = s + x[:, i]
            dist = np.abs(s - d * thr) / np.sqrt(d)
        elif code == ds.CC_CORNER:
            a = x[:, 0] - thr
            b = x[:, 1] - thr
            inside = (a >= 0.0) & (b >= 0.0)
            aa = np.maximum(-a, 0.0)
            bb = np.maximum(-b, 0.0)
            dist = np.where(inside, np.minimum(a, b), np.sqrt(aa * aa + bb * bb))
        elif code == ds.CC_X2_ABOVE:
            dist = np.abs(x[:, 1] - thr)
        elif code == ds.CC_X1_ABOVE:
            dist = np.abs(x[:, 0] - thr)
        else:
            dist = np.full(x.shape[0], np.inf)
        return (dist <= band).astype(float)
    if code == ds.MEAN_BELOW:
        s = np.zeros(x.shape[0])
        for i in range(d):
            s = s + x[:, i]
        return (s / d <= thr).astype(float)
    if code == ds.CC_CORNER:
        return (np.minimum(x[:, 0], x[:, 1]) >= thr).astype(float)
    if code == ds.CC_X2_ABOVE:
        return (x[:, 1] >= thr).astype(float)
    if code == ds.CC_X1_ABOVE:
        return (x[:, 0] >= thr).astype(float)
    return np.ones(x.shape[0])


def walk_batch_numpy(model, d, nch, params, x0, scheme, level, n_fine, m_ref, has_coarse,
                     events, seed, rep_start, n_rep, set_code, thr, band,
                     out_s1, out_s2, out_work, leaves, want_leaves):
    depth = events.shape[0]
    n_leaves = 1 << depth
    h = 1.0 / n_fine
    hc = h * m_ref
    anti = scheme == ANTITHETIC_CC
    start = [0.0] + [float(e) for e in events]
    end = [float(e) for e in events] + [float(n_fine)]
    reps = np.arange(rep_start, rep_start + n_rep, dtype=np.uint64)

    def fresh():
        return {
            "xf": np.tile(x0, (n_rep, 1)), "xc": np.tile(x0, (n_rep, 1)), "xa": np.tile(x0, (n_rep, 1)),
            "acc": np.zeros((n_rep, nch)), "pend": np.zeros((n_rep, nch)),
            "first": np.zeros((n_rep, nch)), "done": 0,
        }

    def copy(st):
        return {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in st.items()}

    saved = [None] * depth
    pcode = [0] * (depth + 1)
    s1 = np.zeros(n_rep)
    s2 = np.zeros(n_rep)
    work = 0
    for i in range(n_leaves):
        if i == 0:
            st = fresh()
            k0 = 0
        else:
            b = (i ^ (i - 1)).bit_length() - 1
            js = depth - 1 - b
            st = copy(saved[js])
            k0 = js + 1
        for k in range(k0, depth + 1):
            if k > 0:
                pcode[k] = pcode[k - 1] | (((i >> (depth - k)) & 1) << (k - 1))
            block = node_block_np(seed, reps, (1 << k) | pcode[k])
            pos, stop, j = start[k], end[k], 0
            while pos < stop:
                nxt = np.floor(pos) + 1.0
                pe = stop if stop < nxt else nxt
                scale = np.sqrt((pe - pos) * h)
                for p in range((nch + 1) // 2):
                    z0, z1 = normal_pair_np(seed, block, level, k, j, p)
                    st["pend"][:, 2 * p] += scale * z0
                    if 2 * p + 1 < nch:
                        st["pend"][:, 2 * p + 1] += scale * z1
                j += 1
                work += 1
                if pe == nxt:
                    dw = st["pend"].copy()
                    st["pend"][:] = 0.0
                    n = st["done"]
                    if has_coarse:
                        if anti:
                            if n % 2 == 0:
                                st["first"][:] = dw
                            else:
                                _antithetic_np(st["xa"], st["first"], dw)
                        st["acc"] += dw
                        if (n + 1) % m_ref == 0:
                            _step_np(model, st["xc"], st["acc"], hc, params, d, scheme)
                            st["acc"][:] = 0.0
                    _step_np(model, st["xf"], dw, h, params, d, scheme)
                    st["done"] = n + 1
                pos = pe
            if k < depth:
                saved[k] = copy(st)
        if not (np.isfinite(st["xf"]).all() and np.isfinite(st["xc"]).all() and np.isfinite(st["xa"]).all()):
            raise FloatingPointError("non-finite path state at leaf")
        v = _indicator_vec(set_code, st["xf"], d, thr, band)
        if has_coarse:
            pc = _indicator_vec(set_code, st["xc"], d, thr, band)
            if anti:
                v = 0.5 * (v + _indicator_vec(set_code, st["xa"], d, thr, band)) - pc
            else:
                v = v - pc
        s1 += v
        s2 += v * v
        if want_leaves:
            leaves[:, i, 0, :] = st["xf"]
            leaves[:, i, 1, :] = st["xc"]
            leaves[:, i, 2, :] = st["xa"]
    out_s1[:] = s1
    out_s2[:] = s2
    out_work[:] = work


walk_batch = walk_batch_numba if HAS_NUMBA else walk_batch_numpy
