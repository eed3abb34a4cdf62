"""
Finite-support integer distributions and the upshifted likelihood-ratio toolkit.

A FiniteDist is a probability mass function on {support_min, ..., support_max}
with positive mass at both ends. Every operator renormalizes its output.
"""
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import TOLERANCES
from src.errors import DisjointSupports, GappedSupport


def _trim(weights: Union[Sequence[float], np.ndarray], support_min: int) -> Tuple[np.ndarray, int]:
    """Strip zero mass from both ends and normalize."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise ValueError("weights must be one-dimensional")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    nz = np.flatnonzero(w > 0)
    if nz.size == 0:
        raise DisjointSupports("distribution has zero total mass")
    lo, hi = int(nz[0]), int(nz[-1])
    w = w[lo:hi + 1]
    return w / w.sum(), support_min + lo


@dataclass(frozen=True, eq=False)
class FiniteDist:
    support_min: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty sequence")
        if self.support_min < 0:
            raise ValueError("support must lie in the non-negative integers")
        if np.any(w < 0) or w[0] <= 0 or w[-1] <= 0:
            raise ValueError("support endpoints must carry positive mass")
        if abs(w.sum() - 1.0) > TOLERANCES.normalization:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "support_min", int(self.support_min))

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_weights(cls, weights, support_min: int = 0) -> "FiniteDist":
        """Normalized distribution whose support must be an interval."""
        w, lo = _trim(weights, support_min)
        if np.any(w == 0):
            raise GappedSupport("interior zero weight in an interval-supported distribution")
        return cls(lo, w)

    @classmethod
    def raw(cls, weights, support_min: int = 0) -> "FiniteDist":
        """Normalized distribution; interior zeros allowed."""
        w, lo = _trim(weights, support_min)
        return cls(lo, w)

    @classmethod
    def point(cls, k: int) -> "FiniteDist":
        return cls(k, np.ones(1))

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "FiniteDist":
        return cls(lo, np.full(hi - lo + 1, 1.0 / (hi - lo + 1)))

    # -- accessors ------------------------------------------------------

    @property
    def support_max(self) -> int:
        return self.support_min + self.weights.size - 1

    def pmf(self, x: int) -> float:
        i = x - self.support_min
        if 0 <= i < self.weights.size:
            return float(self.weights[i])
        return 0.0

    def dense(self, length: Optional[int] = None) -> np.ndarray:
        """Weights over {0, ..., length-1}."""
        if length is None:
            length = self.support_max + 1
        if length < self.support_max + 1:
            raise ValueError(f"length {length} cuts the support at {self.support_max}")
        out = np.zeros(length)
        out[self.support_min:self.support_max + 1] = self.weights
        return out

    def mean(self) -> float:
        return float(np.dot(np.arange(self.support_min, self.support_max + 1), self.weights))

    def has_interval_support(self) -> bool:
        return bool(np.all(self.weights > 0))

    def l1_distance(self, other: "FiniteDist") -> float:
        n = max(self.support_max, other.support_max) + 1
        return float(np.abs(self.dense(n) - other.dense(n)).sum())

    def total_variation(self, other: "FiniteDist") -> float:
        return 0.5 * self.l1_distance(other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteDist):
            return NotImplemented
        return self.support_min == other.support_min and np.array_equal(self.weights, other.weights)

    __hash__ = None

    def __repr__(self) -> str:
        return f"FiniteDist(support_min={self.support_min}, weights={np.round(self.weights, 6).tolist()})"


# ----------------------------------------------------------------------
# Order and shape
# ----------------------------------------------------------------------

def _lr_sides(m: FiniteDist, m2: FiniteDist) -> Tuple[np.ndarray, np.ndarray]:
    """Both sides of m(i+k+l) m2(i) <= m(i+l) m2(i+k) for every i, l >= 0, k >= 1
    inside the joint support bound; beyond it the left side vanishes."""
    n = max(m.support_max, m2.support_max) + 1
    a, b = m.dense(n), m2.dense(n)
    lhs_parts, rhs_parts = [], []
    for k in range(1, n):
        size = n - k
        i = np.arange(size)[:, None]
        l = np.arange(size)[None, :]
        inside = (i + l) < size
        lhs = np.where(inside, a[np.minimum(i + k + l, n - 1)] * b[i], 0.0)
        rhs = np.where(inside, a[np.minimum(i + l, n - 1)] * b[np.minimum(i + k, n - 1)], 0.0)
        lhs_parts.append(lhs[inside])
        rhs_parts.append(rhs[inside])
    if not lhs_parts:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(lhs_parts), np.concatenate(rhs_parts)


def lr_le(m: FiniteDist, m2: FiniteDist, slack: Optional[float] = None) -> bool:
    """m <=lr-up m2."""
    slack = TOLERANCES.lr_slack if slack is None else slack
    lhs, rhs = _lr_sides(m, m2)
    return bool(np.all(lhs - rhs <= slack * np.maximum(lhs, rhs)))


def lr_lt(m: FiniteDist, m2: FiniteDist, slack: Optional[float] = None) -> bool:
    """m <=lr-up m2 with at least one comparison strict beyond the slack."""
    slack = TOLERANCES.lr_slack if slack is None else slack
    lhs, rhs = _lr_sides(m, m2)
    scale = slack * np.maximum(lhs, rhs)
    return bool(np.all(lhs - rhs <= scale) and np.any(rhs - lhs > scale))


def is_log_concave(m: FiniteDist, slack: Optional[float] = None) -> bool:
    slack = TOLERANCES.lr_slack if slack is None else slack
    if not m.has_interval_support():
        return False
    w = m.weights
    if w.size < 3:
        return True
    lhs = w[:-2] * w[2:]
    rhs = w[1:-1] ** 2
    return bool(np.all(lhs - rhs <= slack * np.maximum(lhs, rhs)))


# ----------------------------------------------------------------------
# Operators
# ----------------------------------------------------------------------

def convolve(ms: Iterable[FiniteDist]) -> FiniteDist:
    """Law of the sum of independent draws."""
    ms = list(ms)
    if not ms:
        raise ValueError("convolve needs at least one distribution")
    weights = reduce(np.convolve, (m.weights for m in ms))
    return FiniteDist.raw(weights, sum(m.support_min for m in ms))


def reweight(m: Union[FiniteDist, Sequence[float], np.ndarray], p: Union[Sequence[float], np.ndarray]) -> FiniteDist:
    """Pointwise product m(x) p(x), normalized; both indexed from 0."""
    base = m.dense() if isinstance(m, FiniteDist) else np.asarray(m, dtype=float)
    weights = np.asarray(p, dtype=float)
    n = min(base.size, weights.size)
    product = base[:n] * weights[:n]
    if n == 0 or not np.any(product > 0):
        raise DisjointSupports("reweighting has zero total mass")
    return FiniteDist.raw(product)


def shifted_reversal(p: Union[FiniteDist, Sequence[float], np.ndarray], b: int) -> np.ndarray:
    """p^R(x) = p(b - x) 1(x <= b), as a sequence over {0, ..., b}."""
    if b < 0:
        raise ValueError("shift must be non-negative")
    arr = p.dense() if isinstance(p, FiniteDist) else np.asarray(p, dtype=float)
    out = np.zeros(b + 1)
    top = min(arr.size - 1, b)
    if top >= 0:
        out[b - top:] = arr[top::-1]
    return out


def geometric_weights(lam: float, length: int) -> np.ndarray:
    """lam^x over {0, ..., length-1}, scaled so the largest entry is 1."""
    x = np.arange(length, dtype=float)
    log_w = x * np.log(lam)
    return np.exp(log_w - log_w.max()) if length else log_w


def interval_indicator(lo: int, hi: int, length: int) -> np.ndarray:
    """1(lo <= x <= hi) over {0, ..., length-1}."""
    x = np.arange(length)
    return ((x >= lo) & (x <= hi)).astype(float)
