"""One-step discretisation kernels.

Increments are always passed in, never drawn here: the same increments must
drive the fine, coarse and antithetic paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .sde_models import CLARK_CAMERON, GBM, GbmParams, ModelSpec

EULER = 0
MILSTEIN = 1
ANTITHETIC_CC = 2
EXACT = 3

SCHEMES = {"euler": EULER, "milstein": MILSTEIN, "antithetic-cc": ANTITHETIC_CC, "exact": EXACT}


class NonFiniteStateError(FloatingPointError):
    def __init__(self, state):
        super().__init__(f"non-finite state after step: {state!r}")
        self.state = state


def scheme_code(name: str) -> int:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}") from None


def check_compatible(model: ModelSpec, scheme: str) -> None:
    code = scheme_code(scheme)
    if code == MILSTEIN and not model.supports_milstein:
        raise ValueError(f"scheme 'milstein' needs Levy areas for model {model.name!r}")
    if code == ANTITHETIC_CC and not model.supports_antithetic_truncated_milstein:
        raise ValueError(f"scheme 'antithetic-cc' is only defined for clark-cameron, not {model.name!r}")
    if code == EXACT and model.code != GBM:
        raise ValueError("exact stepping is only available for gbm")


@dataclass(frozen=True)
class StepInput:
    x: np.ndarray
    t: float
    h: float
    dW: np.ndarray

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size must be positive")
        if self.t + self.h > 1.0 + 1e-12:
            raise ValueError("step runs past t=1")


def _finite(x):
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError(x)
    return x


def euler_step(model: ModelSpec, inp: StepInput) -> np.ndarray:
    x = np.asarray(inp.x, dtype=float)
    out = x + model.drift(x, inp.t) * inp.h + model.diffusion(x, inp.t) @ np.asarray(inp.dW, dtype=float)
    return _finite(out)


def milstein_step_scalar_gbm(params: GbmParams, inp: StepInput) -> float:
    """Milstein step for one-asset GBM; ``inp.dW[0]`` is the combined increment."""
    if params.d != 1:
        raise ValueError("scalar Milstein needs d=1")
    x = float(np.ravel(inp.x)[0])
    db = float(np.ravel(inp.dW)[0])
    mu, sig = params.mu[0], params.sigma[0]
    out = x + mu * x * inp.h + sig * x * db + 0.5 * sig * sig * x * (db * db - inp.h)
    return float(_finite(np.float64(out)))


def cc_truncated_milstein_step(x, w1_begin: float, dW) -> np.ndarray:
    """Clark-Cameron step with the Levy area dropped."""
    x = np.asarray(x, dtype=float)
    return _finite(np.array([x[0] + dW[0], x[1] + w1_begin * dW[1] + 0.5 * dW[0] * dW[1]]))


def cc_antithetic_pair_of_steps(xa, w1_begin: float, dW_first, dW_second) -> np.ndarray:
    """Two fine antithetic steps spanning one coarse step, increments swapped."""
    xa = np.asarray(xa, dtype=float)
    x2 = xa[1] + w1_begin * dW_second[1] + 0.5 * dW_second[0] * dW_second[1]
    x2 = x2 + (w1_begin + dW_second[0]) * dW_first[1] + 0.5 * dW_first[0] * dW_first[1]
    return _finite(np.array([xa[0] + dW_second[0] + dW_first[0], x2]))


# ---------------------------------------------------------------------------
# in-place scalar kernels used by the tree walk
#
# ``db`` holds the increment over one fine step in the model's kernel
# channels (see ModelSpec.noise_channels).
# ---------------------------------------------------------------------------

@njit(inline="always")
def gbm_step_inplace(x, db, h, params, d, scheme):
    rho = params[0]
    sys_w = np.sqrt(1.0 - rho * rho)
    for i in range(d):
        if d == 1:
            b = db[0]
        else:
            b = rho * db[i + 1] + sys_w * db[0]
        mu = params[1 + i]
        sig = params[1 + d + i]
        xi = x[i]
        if scheme == EXACT:
            x[i] = xi * np.exp((mu - 0.5 * sig * sig) * h + sig * b)
        elif scheme == MILSTEIN:
            x[i] = xi + mu * xi * h + sig * xi * b + 0.5 * sig * sig * xi * (b * b - h)
        else:
            x[i] = xi + mu * xi * h + sig * xi * b


@njit(inline="always")
def cc_step_inplace(x, dw, scheme):
    # x[0] is W_1 at the start of the step
    if scheme == EULER:
        x[1] = x[1] + x[0] * dw[1]
    else:
        x[1] = x[1] + x[0] * dw[1] + 0.5 * dw[0] * dw[1]
    x[0] = x[0] + dw[0]


@njit(inline="always")
def cc_antithetic_inplace(xa, first, second):
    w1 = xa[0]
    x2 = xa[1] + w1 * second[1] + 0.5 * second[0] * second[1]
    x2 = x2 + (w1 + second[0]) * first[1] + 0.5 * first[0] * first[1]
    xa[1] = x2
    xa[0] = w1 + second[0] + first[0]


@njit(inline="always")
def gbm_kernel_step(x, db, h, params, d, scheme):
    gbm_step_inplace(x, db, h, params, d, scheme)


@njit(inline="always")
def cc_kernel_step(x, db, h, params, d, scheme):
    cc_step_inplace(x, db, scheme)


@njit(inline="always")
def model_step_inplace(model, x, db, h, params, d, scheme):
    if model == GBM:
        gbm_step_inplace(x, db, h, params, d, scheme)
    elif model == CLARK_CAMERON:
        cc_step_inplace(x, db, scheme)
