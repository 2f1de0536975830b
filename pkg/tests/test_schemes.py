import math

import numpy as np
import pytest

from branchmlmc.schemes import (NonFiniteStateError, StepInput, cc_antithetic_pair_of_steps,
                                cc_truncated_milstein_step, check_compatible, euler_step,
                                milstein_step_scalar_gbm)
from branchmlmc.sde_models import GbmParams, make_clark_cameron, make_gbm


def test_euler_examples():
    g = make_gbm(GbmParams())
    assert euler_step(g, StepInput(np.array([1.0]), 0.0, 0.25, np.zeros(2)))[0] == pytest.approx(1.0125)
    cc = make_clark_cameron()
    np.testing.assert_allclose(euler_step(cc, StepInput(np.array([0.5, 0.0]), 0.0, 0.1, np.array([0.1, 0.2]))),
                               [0.6, 0.1])
    x = np.array([0.3, -2.0])
    np.testing.assert_array_equal(euler_step(cc, StepInput(x, 0.5, 0.25, np.zeros(2))), x)


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_euler_non_finite():
    g = make_gbm(GbmParams())
    with pytest.raises(NonFiniteStateError) as e:
        euler_step(g, StepInput(np.array([np.inf]), 0.0, 0.1, np.zeros(2)))
    assert not np.isfinite(e.value.state[0])


def test_step_input_validation():
    with pytest.raises(ValueError):
        StepInput(np.zeros(1), 0.0, 0.0, np.zeros(1))
    with pytest.raises(ValueError):
        StepInput(np.zeros(1), 0.9, 0.2, np.zeros(1))


def test_milstein_examples():
    p = GbmParams()
    assert milstein_step_scalar_gbm(p, StepInput(np.array([1.0]), 0, 0.25, np.array([0.0]))) == pytest.approx(1.0075)
    h = 0.25
    db = math.sqrt(h)
    euler = 1 + 0.05 * h + 0.2 * db
    assert milstein_step_scalar_gbm(p, StepInput(np.array([1.0]), 0, h, np.array([db]))) == pytest.approx(euler)


def test_cc_truncated_milstein_examples():
    np.testing.assert_allclose(cc_truncated_milstein_step([0, 0], 0.0, [0.1, 0.1]), [0.1, 0.005])
    np.testing.assert_allclose(cc_truncated_milstein_step([0.4, 2.0], 0.4, [0.3, 0.0]), [0.7, 2.0])
    np.testing.assert_allclose(cc_truncated_milstein_step([1, 2], 1.0, [0, 0.5]), [1, 2.5])


def test_antithetic_swap_is_noop_for_equal_increments():
    dw = np.array([0.13, -0.4])
    x = np.array([0.2, 0.7])
    twice = cc_truncated_milstein_step(cc_truncated_milstein_step(x, x[0], dw), x[0] + dw[0], dw)
    np.testing.assert_array_equal(cc_antithetic_pair_of_steps(x, x[0], dw, dw), twice)


def test_antithetic_hand_evaluated():
    # first fine step uses dW_second = (0, 0.2) with W1 = 0: x2 = 0
    # second uses dW_first = (0.1, 0) with W1 = 0 + 0: x2 stays 0
    anti = cc_antithetic_pair_of_steps([0, 0], 0.0, [0.1, 0.0], [0.0, 0.2])
    np.testing.assert_allclose(anti, [0.1, 0.0])
    fine = cc_truncated_milstein_step(cc_truncated_milstein_step([0, 0], 0.0, [0.1, 0.0]), 0.1, [0.0, 0.2])
    np.testing.assert_allclose(fine, [0.1, 0.02])
    coarse = cc_truncated_milstein_step([0, 0], 0.0, [0.1, 0.2])
    np.testing.assert_allclose(coarse, [0.1, 0.01])


def _cc_pair_vec(x1, x2, first, second, xa2=None):
    """Vectorised fine and antithetic updates over one coarse step."""
    xa2 = x2 if xa2 is None else xa2
    f2 = x2 + x1 * first[1] + 0.5 * first[0] * first[1]
    f1 = x1 + first[0]
    f2 = f2 + f1 * second[1] + 0.5 * second[0] * second[1]
    a2 = xa2 + x1 * second[1] + 0.5 * second[0] * second[1]
    a2 = a2 + (x1 + second[0]) * first[1] + 0.5 * first[0] * first[1]
    return f2, a2


def test_antithetic_distributional_identity(rng):
    n = 10**6
    h = 0.01
    x1 = rng.standard_normal(n)
    x2 = rng.standard_normal(n)
    first = rng.standard_normal((2, n)) * math.sqrt(h)
    second = rng.standard_normal((2, n)) * math.sqrt(h)
    f2, a2 = _cc_pair_vec(x1, x2, first, second)
    d = f2 - a2
    assert abs(d.mean()) < 4 * d.std() / math.sqrt(n)
    q = (f2 - f2.mean()) ** 2 - (a2 - a2.mean()) ** 2
    assert abs(q.mean()) < 4 * q.std() / math.sqrt(n)
    # spot check the vector formula against the reference function
    i = 17
    ref = cc_antithetic_pair_of_steps([x1[i], x2[i]], x1[i], first[:, i], second[:, i])
    assert ref[1] == pytest.approx(a2[i], rel=1e-14)


def test_antithetic_strong_rates(rng):
    """``E|fine - exact|^2 ~ h``; the antithetic average reproduces the coarse x2 up to roundoff.

    The x2 update is bilinear in (X1, dW2), so the swapped pair's cross terms cancel exactly and
    the usual ``h^2`` decay of the averaged correction is attained trivially.
    """
    n, top, ref_lev = 4000, 7, 12
    K = 2**ref_lev
    dW = rng.standard_normal((2, n, K)) * math.sqrt(1.0 / K)
    W1 = np.cumsum(dW[0], axis=1)
    W1_left = np.concatenate([np.zeros((n, 1)), W1[:, :-1]], axis=1)
    exact2 = np.sum(W1_left * dW[1] + 0.5 * dW[0] * dW[1], axis=1)
    rows = []
    for lev in range(2, top + 1):
        m = 2**lev
        inc = dW.reshape(2, n, m, -1).sum(3)
        xf1 = np.zeros(n)
        xf2 = np.zeros(n)
        xa2 = np.zeros(n)
        xc2 = np.zeros(n)
        for j in range(0, m, 2):
            first, second = inc[:, :, j], inc[:, :, j + 1]
            w = xf1.copy()
            f2, a2 = _cc_pair_vec(w, xf2, first, second, xa2)
            c = first + second
            xc2 = xc2 + w * c[1] + 0.5 * c[0] * c[1]
            xf2, xa2 = f2, a2
            xf1 = w + first[0] + second[0]
        rows.append((1.0 / m, np.mean((xf2 - exact2) ** 2), np.mean((0.5 * (xf2 + xa2) - xc2) ** 2)))
    rows = np.array(rows)
    s_fine = np.polyfit(np.log(rows[:, 0]), np.log(rows[:, 1]), 1)[0]
    assert abs(s_fine - 1.0) < 0.25
    assert np.all(rows[:, 2] <= 1e-24 * rows[:, 0] ** 2)


def test_compatibility_rules():
    cc = make_clark_cameron()
    g = make_gbm(GbmParams())
    check_compatible(cc, "antithetic-cc")
    check_compatible(g, "milstein")
    for model, scheme in ((g, "antithetic-cc"), (cc, "milstein"), (cc, "exact")):
        with pytest.raises(ValueError):
            check_compatible(model, scheme)
    with pytest.raises(ValueError):
        check_compatible(g, "rk4")
