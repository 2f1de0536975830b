import json
import os
import subprocess
import sys

import numpy as np
import pytest

from branchmlmc import kernels
from branchmlmc._accel import HAS_NUMBA
from branchmlmc.estimators import make_config
from branchmlmc.schemes import scheme_code

CASES = [("gbm", "euler", 1.0), ("gbm", "milstein", 4 / 3), ("gbm", "exact", 1.0),
         ("clark-cameron", "euler", 4 / 3), ("clark-cameron", "antithetic-cc", 1.0)]


def _run(walk, cfg, level, n, band=-1.0, coarse=None):
    sched = cfg.schedule(level)
    m = cfg.model
    has_coarse = level > 0 if coarse is None else coarse
    s1, s2 = np.zeros(n), np.zeros(n)
    work = np.zeros(n, dtype=np.int64)
    out = np.full((n, sched.n_leaves, 3, m.d), np.nan)
    walk(m.code, m.d, m.noise_channels, m.kernel_params(), m.x0.astype(float), scheme_code(cfg.scheme),
         level, sched.n_fine, sched.M, has_coarse, sched.events.astype(float), np.uint64(cfg.seed),
         5, n, cfg.dset.code, float(cfg.dset.threshold), float(band), s1, s2, work, out, True)
    return s1, s2, work, out


@pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable")
@pytest.mark.parametrize("model,scheme,eta", CASES)
def test_numba_and_numpy_agree(model, scheme, eta):
    cfg = make_config(model, scheme, eta=eta, seed=17)
    for level in (0, 1, 4):
        a = _run(kernels.walk_batch_numba, cfg, level, 40)
        b = _run(kernels.walk_batch_numpy, cfg, level, 40)
        np.testing.assert_array_equal(a[2], b[2])
        np.testing.assert_allclose(a[3], b[3], rtol=1e-13, atol=1e-15, equal_nan=True)
        np.testing.assert_allclose(a[0], b[0], atol=1e-12)
        np.testing.assert_allclose(a[1], b[1], atol=1e-12)


@pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable")
def test_band_indicator_agrees():
    cfg = make_config("gbm", "euler", seed=2)
    a = _run(kernels.walk_batch_numba, cfg, 3, 64, band=0.05, coarse=False)
    b = _run(kernels.walk_batch_numpy, cfg, 3, 64, band=0.05, coarse=False)
    np.testing.assert_array_equal(a[0], b[0])


_SNIPPET = """
import json
from branchmlmc._accel import backend
from branchmlmc.estimators import make_config
y, w = make_config(seed=3).sample_level(4, 0, 300, threads=1)
print(json.dumps({"backend": backend(), "y": y.tolist(), "w": w.tolist()}))
"""


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, BRANCHMLMC_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", _SNIPPET], env=env, capture_output=True, text=True, check=True)
    res = json.loads(out.stdout)
    assert res["backend"] == "numpy"
    y, w = make_config(seed=3).sample_level(4, 0, 300, threads=1)
    np.testing.assert_allclose(res["y"], y, atol=1e-12)
    assert res["w"] == w.tolist()
