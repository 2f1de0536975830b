import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchmlmc.branching import (SNAP, BranchIndex, BranchSchedule, compute_depth, fine_steps,
                                  leaf_increments, pair_meet_census, run_batch, segment_times,
                                  simulate_tree, tree_work)
from branchmlmc.digital_sets import get_set
from branchmlmc.sde_models import GbmParams, make_clark_cameron, make_gbm

ETA1_SERIES = [2, 6, 16, 40, 96, 224, 512, 1152, 2560, 5632, 12288, 26624, 57344]
ETA43_SERIES = [2, 4, 12, 34, 80, 152, 326, 720, 1526, 2978, 6124, 12780, 26242]


def test_compute_depth_examples():
    assert compute_depth(2**-4, 0.5, 1.0) == 3
    for lev in range(12):
        assert compute_depth(2.0 ** (-lev - 1), 0.5, 1.0) == lev
    assert compute_depth(2**-5, 0.5, 4 / 3) == 3
    assert compute_depth(0.5, 0.25, 1.0) == 0  # clamped


@pytest.mark.parametrize("args", [(0.1, 0.0, 1.0), (0.1, 1.0, 1.0), (0.1, 0.5, 0.0), (0.0, 0.5, 1.0)])
def test_compute_depth_rejects(args):
    with pytest.raises(ValueError):
        compute_depth(*args)


@settings(max_examples=200, deadline=None)
@given(lev=st.integers(0, 14), tau0=st.floats(0.01, 0.99), eta=st.floats(0.5, 2.5))
def test_depth_bracket(lev, tau0, eta):
    h = 2.0 ** (-lev - 1)
    k = compute_depth(h, tau0, eta)
    taus = tau0 * 2.0 ** (-eta * np.arange(k + 1))
    assert np.all(np.diff(taus) < 0)
    if k >= 1:
        # the first unused tau lands in [h, 2^eta h)
        assert h * (1 - 1e-9) <= taus[k] < 2.0**eta * h * (1 + 1e-9)
    else:
        assert tau0 < 2.0**eta * h * (1 + 1e-9)


def test_segment_times():
    np.testing.assert_array_equal(segment_times(BranchSchedule(2, 8)), [0, 0.5, 0.75, 1])
    np.testing.assert_array_equal(segment_times(BranchSchedule.unbranched(3, 16)), [0, 1])
    s = BranchSchedule(12, fine_steps(12), eta=4 / 3)
    assert s.taus[3] == 2**-5
    assert len(s.events) == s.depth and s.n_leaves == 2**s.depth


def test_snap_mode_rounds_to_coarse_grid_and_reports_collisions():
    s = BranchSchedule(6, fine_steps(6), eta=4 / 3, align=SNAP)
    assert np.all(np.mod(s.events, 2) == 0)
    assert s.n_leaves == 2**s.depth
    t = segment_times(s)
    assert np.all(np.diff(t) > 0)
    crowded = BranchSchedule(3, fine_steps(3), tau0=0.5, eta=0.5, align=SNAP)
    assert crowded.collisions > 0
    assert len(segment_times(crowded)) < crowded.depth + 2


def test_published_work_series():
    for eta, series in ((1.0, ETA1_SERIES), (4 / 3, ETA43_SERIES)):
        got = [tree_work(BranchSchedule(lev, fine_steps(lev), eta=eta)) for lev in range(13)]
        assert got == series


def test_aligned_work_closed_form():
    for lev in range(1, 14):
        assert tree_work(BranchSchedule(lev, 2**lev)) == (lev + 1) * 2 ** (lev - 1)


@pytest.mark.parametrize("eta", [0.8, 1.0, 4 / 3])
def test_walker_work_matches_closed_form(eta):
    model = make_gbm(GbmParams())
    dset = get_set("gbm-mean-below", 1.0)
    for lev in range(0, 11):
        sched = BranchSchedule(lev, fine_steps(lev), eta=eta)
        _, _, work, _ = run_batch(model, "euler", dset, sched, 0, 3, 11)
        assert np.all(work == tree_work(sched))


def test_degenerate_tree():
    model = make_gbm(GbmParams())
    sched = BranchSchedule.unbranched(5, fine_steps(5))
    leaves, wc = simulate_tree(5, model, "euler", get_set("gbm-mean-below", 1.0), sched, 0, 0)
    assert len(leaves) == 1 and wc.increments_generated == 64


def test_census():
    assert pair_meet_census(1) == {0: 2}
    for k in range(7):
        c = pair_meet_census(k)
        assert sum(c.values()) == 2**k * (2**k - 1)
    c3 = pair_meet_census(3)
    assert [c3[m] // 8 for m in range(3)] == [4, 2, 1]
    leaves = [BranchIndex(4, i) for i in range(16)]
    counts = {}
    for u, v in product(leaves, leaves):
        if u != v:
            counts[u.meet_depth(v)] = counts.get(u.meet_depth(v), 0) + 1
    assert counts == pair_meet_census(4)


def test_branch_index():
    u = BranchIndex.from_symbols([1, -1, 1])
    assert u.code == 0b101 and u.symbols() == (1, -1, 1)
    assert u.parent() == BranchIndex.from_symbols([1, -1])
    assert u.parent().child(1) == u
    assert u.meet_depth(BranchIndex.from_symbols([1, 1, 1])) == 1
    assert u.meet_depth(u) == 3
    with pytest.raises(ValueError):
        BranchIndex().parent()
    with pytest.raises(ValueError):
        BranchIndex(2, 4)


def _cc_euler(increments):
    x1 = x2 = 0.0
    for dw in increments:
        x1, x2 = x1 + dw[0], x2 + x1 * dw[1]
    return np.array([x1, x2])


def test_replay_and_prefix_sharing():
    model = make_clark_cameron()
    dset = get_set("cc-corner", 1.0)
    sched = BranchSchedule(5, fine_steps(5), eta=4 / 3)
    leaves, _ = simulate_tree(5, model, "euler", dset, sched, 3, 99)
    for leaf in leaves:
        replay = _cc_euler(leaf_increments(sched, leaf.index, 3, 99, 2))
        assert leaf.fine[0] == replay[0]
        np.testing.assert_allclose(leaf.fine, replay, rtol=1e-12, atol=1e-14)
    # leaves meeting at depth m share increments up to the (m+1)-th branch time
    a, b = leaves[0].index, leaves[-1].index
    ia = leaf_increments(sched, a, 3, 99, 2)
    ib = leaf_increments(sched, b, 3, 99, 2)
    first = int(math.floor(sched.events[a.meet_depth(b)]))
    np.testing.assert_array_equal(ia[:first], ib[:first])
    assert not np.array_equal(ia[first + 1:], ib[first + 1:])


def test_coarse_path_uses_summed_fine_increments():
    model = make_clark_cameron()
    dset = get_set("cc-corner", 1.0)
    sched = BranchSchedule(4, fine_steps(4))
    leaves, _ = simulate_tree(4, model, "euler", dset, sched, 0, 5)
    leaf = leaves[2]
    inc = leaf_increments(sched, leaf.index, 0, 5, 2)
    np.testing.assert_allclose(leaf.coarse, _cc_euler(inc.reshape(-1, 2, 2).sum(1)), rtol=1e-12, atol=1e-14)


def test_antithetic_requires_snap():
    model = make_clark_cameron()
    dset = get_set("cc-corner", 1.0)
    sched = BranchSchedule(4, fine_steps(4), eta=4 / 3)
    assert np.any(np.mod(sched.events, 2) != 0)
    with pytest.raises(ValueError):
        run_batch(model, "antithetic-cc", dset, sched, 0, 2, 0)
    ok = BranchSchedule(4, fine_steps(4), eta=4 / 3, align=SNAP)
    run_batch(model, "antithetic-cc", dset, ok, 0, 2, 0)


def test_from_events_validation():
    with pytest.raises(ValueError):
        BranchSchedule.from_events(3, 16, [5.0, 2.0])
    s = BranchSchedule.from_events(3, 16, [12.0] * 3)
    assert s.depth == 3 and s.collisions == 2
