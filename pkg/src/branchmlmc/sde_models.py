"""SDE models: correlated geometric Brownian motion and Clark-Cameron."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr

GBM = 0
CLARK_CAMERON = 1


@dataclass(frozen=True)
class GbmParams:
    d: int = 1
    mu: tuple[float, ...] = (0.05,)
    sigma: tuple[float, ...] = (0.2,)
    rho: float = 0.7
    x0: tuple[float, ...] = (1.0,)

    @classmethod
    def uniform(cls, d=1, mu=0.05, sigma=0.2, rho=0.7, x0=1.0):
        """Same drift, volatility and start value for every asset."""
        return cls(d=d, mu=(mu,) * d, sigma=(sigma,) * d, rho=rho, x0=(x0,) * d)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        for name in ("mu", "sigma", "x0"):
            if len(getattr(self, name)) != self.d:
                raise ValueError(f"{name} must have length d={self.d}")
        if not abs(self.rho) <= 1.0:
            raise ValueError(f"|rho| must be <= 1, got {self.rho}")
        if any(s <= 0 for s in self.sigma):
            raise ValueError("sigma entries must be positive")


@dataclass(frozen=True)
class ModelSpec:
    """Immutable SDE description ``dX = a(X,t) dt + sigma(X,t) dW``.

    ``code`` and ``params`` select the compiled stepping kernels; ``drift``
    and ``diffusion`` are the generic callbacks used by the reference
    one-step schemes.
    """

    name: str
    d: int
    d_prime: int
    drift: Callable[[np.ndarray, float], np.ndarray]
    diffusion: Callable[[np.ndarray, float], np.ndarray]
    x0: np.ndarray
    code: int
    supports_milstein: bool = False
    supports_antithetic_truncated_milstein: bool = False
    exact_components: tuple[int, ...] = ()
    gbm: GbmParams | None = field(default=None, repr=False)

    @property
    def noise_channels(self) -> int:
        """Normals drawn per increment by the compiled kernels.

        A one-asset GBM only ever sees ``rho W_1 + sqrt(1 - rho^2) W_0``,
        itself a standard Brownian motion, so one channel suffices.
        """
        if self.code == GBM and self.d == 1:
            return 1
        return self.d_prime

    def kernel_params(self) -> np.ndarray:
        """Flat float array ``[rho, mu_1..mu_d, sigma_1..sigma_d]`` for the kernels."""
        if self.gbm is None:
            return np.zeros(1)
        p = self.gbm
        return np.array([p.rho, *p.mu, *p.sigma], dtype=np.float64)


def make_gbm(params: GbmParams) -> ModelSpec:
    d = params.d
    mu = np.asarray(params.mu, dtype=float)
    sig = np.asarray(params.sigma, dtype=float)
    rho = params.rho
    sys_w = math.sqrt(1.0 - rho * rho)

    def drift(x, t):
        return mu * np.asarray(x, dtype=float)

    def diffusion(x, t):
        x = np.asarray(x, dtype=float)
        out = np.zeros((d, d + 1))
        out[:, 0] = sig * x * sys_w
        out[np.arange(d), np.arange(1, d + 1)] = sig * x * rho
        return out

    return ModelSpec(
        name="gbm", d=d, d_prime=d + 1, drift=drift, diffusion=diffusion,
        x0=np.asarray(params.x0, dtype=float), code=GBM, supports_milstein=True,
        gbm=params,
    )


def make_clark_cameron() -> ModelSpec:
    def drift(x, t):
        return np.zeros(2)

    def diffusion(x, t):
        return np.array([[1.0, 0.0], [0.0, float(x[0])]])

    return ModelSpec(
        name="clark-cameron", d=2, d_prime=2, drift=drift, diffusion=diffusion,
        x0=np.zeros(2), code=CLARK_CAMERON,
        supports_antithetic_truncated_milstein=True, exact_components=(0,),
    )


def gbm_exact_terminal(params: GbmParams, w_sys, w_idio) -> np.ndarray:
    """Exact ``X_1`` given terminal Brownian values ``W_0(1)`` and ``W_i(1)``."""
    mu = np.asarray(params.mu)
    sig = np.asarray(params.sigma)
    b = params.rho * np.asarray(w_idio) + math.sqrt(1.0 - params.rho**2) * np.asarray(w_sys)
    return np.asarray(params.x0) * np.exp(mu - 0.5 * sig**2 + sig * b)


def gbm_digital_closed_form(params: GbmParams, threshold: float) -> float:
    """``P(X_1 <= K)`` for a one-asset GBM (lognormal CDF)."""
    if params.d != 1:
        raise ValueError("closed form only available for d=1")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if math.isinf(threshold):
        return 1.0
    mu, sig, x0 = params.mu[0], params.sigma[0], params.x0[0]
    z = (math.log(threshold / x0) - (mu - 0.5 * sig * sig)) / sig
    return float(ndtr(z))


MODEL_REGISTRY: dict[str, Callable[..., ModelSpec]] = {
    "gbm": lambda params=None: make_gbm(params or GbmParams()),
    "clark-cameron": lambda params=None: make_clark_cameron(),
}


def get_model(name: str, gbm_params: GbmParams | None = None) -> ModelSpec:
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODEL_REGISTRY)}") from None
    return factory(gbm_params)
