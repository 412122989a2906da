"""Threshold rules for adversarial order with independently sampled history.

The k-max rule sets the k-th largest sample as a threshold and accepts the first
online value above it. Indices returned by the run functions are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import special, stats

from .core import VACUOUS, Outcome

Real = float | Fraction


def _check_open_p(p: Real) -> None:
    if not 0 <= p < 1:
        raise ValueError(f"p must lie in [0, 1), got {p}")


def kmax_k(p: Real) -> int:
    """floor(1/(1-p)); exact for Fractions, snapped to integers within 1e-9 for floats."""
    _check_open_p(p)
    if isinstance(p, Fraction):
        return math.floor(1 / (1 - p))
    x = 1.0 / (1.0 - float(p))
    r = round(x)
    # 2/3 in binary floating point lands just below the breakpoint.
    if abs(x - r) <= 1e-9 * x:
        return int(r)
    return math.floor(x)


@dataclass(frozen=True)
class KMaxPolicy:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")

    @classmethod
    def from_p(cls, p: Real) -> "KMaxPolicy":
        return cls(kmax_k(p))

    def threshold(self, samples: Sequence[float]) -> float:
        """The k-th largest sample, or -inf when there are fewer than k samples."""
        if len(samples) < self.k:
            return -math.inf
        return sorted(samples, reverse=True)[self.k - 1]


def kmax_run(
    policy: KMaxPolicy, samples: Sequence[float], online: Sequence[float]
) -> int | None | Outcome:
    if not online:
        return VACUOUS
    thr = policy.threshold(samples)
    for i, v in enumerate(online):
        if v > thr:
            return i
    return None


def kmax_success(p: Real, k: int) -> Real:
    """k p^k (1-p): the win probability of a fixed k on increasing instances of size > k."""
    return k * p**k * (1 - p)


def lower_bound(p: float) -> float:
    if p == 0:
        return 0.0
    return float(p) ** (1.0 / (1.0 - float(p)))


def upper_bound(p: float) -> float:
    """max over real k of k p^k (1-p), i.e. (1-p) / (e ln(1/p))."""
    if p == 0:
        return 0.0
    p = float(p)
    return (1.0 - p) / (math.e * -math.log(p))


@dataclass(frozen=True)
class AosGuarantee:
    p: Real
    k: int
    guarantee: Real
    lower_bound: float
    upper_bound: float


def kmax_guarantee(p: Real) -> AosGuarantee:
    """Guarantee of the k-max rule with k = floor(1/(1-p)), plus its analytic sandwich."""
    k = kmax_k(p)
    return AosGuarantee(p, k, kmax_success(p, k), lower_bound(p), upper_bound(p))


def kmax_unknown_p_k(n: int, h: int) -> int:
    if not 0 <= h < n:
        raise ValueError("need 0 <= h < n")
    return n // (n - h)


def kmax_unknown_p_run(
    n: int, samples: Sequence[float], online: Sequence[float]
) -> int | None | Outcome:
    h = len(samples)
    if h == n:
        return VACUOUS
    if h + len(online) != n:
        raise ValueError("samples and online must partition n elements")
    return kmax_run(KMaxPolicy(kmax_unknown_p_k(n, h)), samples, online)


def kmax_unknown_p_terms(n: int, variant: str = "exact") -> np.ndarray:
    """Win probability on the increasing instance given h samples, for h = 0..n.

    ``exact`` counts sample sets: with k = floor(n/(n-h)) the rule wins iff exactly
    one of the top k is online and the (k+1)-th is sampled, which happens for
    k * C(n-k-1, h-k) of the C(n, h) equally likely sets. When h < k the rule takes
    the first online value, winning only if it is the single online element.
    ``displayed`` replaces the count by the independent-labels approximation
    k (h/n)^k (n-h)/n. Both score h = n as a win.
    """
    if n < 1:
        raise ValueError("n must be positive")
    h = np.arange(n)
    k = n // (n - h)
    if variant == "displayed":
        body = k * (h / n) ** k * ((n - h) / n)
    elif variant == "exact":
        enough = k <= h
        kk = np.where(enough, k, 0)
        log_count = (
            np.log(np.maximum(kk, 1))
            + special.gammaln(n - kk)
            - special.gammaln(h - kk + 1)
            - special.gammaln(n - h)
            - (special.gammaln(n + 1) - special.gammaln(h + 1) - special.gammaln(n - h + 1))
        )
        body = np.where(enough, np.exp(log_count), np.where(n - h == 1, 1.0, 0.0))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return np.append(body, 1.0)


def kmax_unknown_p_success(n: int, p: float, variant: str = "exact") -> float:
    """Mixture of the per-h win probabilities with Binomial(n, p) weights."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    weights = stats.binom.pmf(np.arange(n + 1), n, p)
    return float(np.dot(weights, kmax_unknown_p_terms(n, variant)))
