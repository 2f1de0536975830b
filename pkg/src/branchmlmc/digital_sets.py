"""Digital payoff sets S with exact distance-to-boundary formulas."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit

EVERYWHERE = 0
MEAN_BELOW = 1
CC_CORNER = 2
CC_X2_ABOVE = 3
CC_X1_ABOVE = 4


@njit
def in_set(code, x, d, thr):
    if code == MEAN_BELOW:
        s = 0.0
        for i in range(d):
            s += x[i]
        return s / d <= thr
    if code == CC_CORNER:
        return min(x[0], x[1]) >= thr
    if code == CC_X2_ABOVE:
        return x[1] >= thr
    if code == CC_X1_ABOVE:
        return x[0] >= thr
    return True


@njit
def dist_to_boundary(code, x, d, thr):
    if code == MEAN_BELOW:
        s = 0.0
        for i in range(d):
            s += x[i]
        return abs(s - d * thr) / np.sqrt(d)
    if code == CC_CORNER:
        a = x[0] - thr
        b = x[1] - thr
        if a >= 0.0 and b >= 0.0:
            return min(a, b)
        a = max(-a, 0.0)
        b = max(-b, 0.0)
        return np.sqrt(a * a + b * b)
    if code == CC_X2_ABOVE:
        return abs(x[1] - thr)
    if code == CC_X1_ABOVE:
        return abs(x[0] - thr)
    return np.inf


@njit
def indicator(code, x, d, thr, band):
    """``1{x in S}``, or ``1{dist_K(x) <= band}`` when ``band >= 0``."""
    if band >= 0.0:
        return 1.0 if dist_to_boundary(code, x, d, thr) <= band else 0.0
    return 1.0 if in_set(code, x, d, thr) else 0.0


@dataclass(frozen=True)
class DigitalSet:
    name: str
    code: int
    threshold: float = 1.0
    dims: int | None = None

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(in_set(self.code, x, x.shape[0], self.threshold))

    def dist(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(dist_to_boundary(self.code, x, x.shape[0], self.threshold))

    def with_threshold(self, threshold: float) -> "DigitalSet":
        return DigitalSet(self.name, self.code, float(threshold), self.dims)


BUILTIN_SETS = {
    "gbm-mean-below": DigitalSet("gbm-mean-below", MEAN_BELOW),
    "cc-corner": DigitalSet("cc-corner", CC_CORNER, dims=2),
    "cc-halfplane": DigitalSet("cc-halfplane", CC_X2_ABOVE, dims=2),
    "cc-halfplane-x1": DigitalSet("cc-halfplane-x1", CC_X1_ABOVE, dims=2),
    "everywhere": DigitalSet("everywhere", EVERYWHERE),
}


def get_set(name: str, threshold: float | None = None) -> DigitalSet:
    try:
        s = BUILTIN_SETS[name]
    except KeyError:
        raise ValueError(f"unknown digital set {name!r}; choose from {sorted(BUILTIN_SETS)}") from None
    return s if threshold is None or math.isnan(threshold) else s.with_threshold(threshold)
