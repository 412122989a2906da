"""Random-order analytics: optimal time thresholds, their guarantee, finite-n
success probabilities, the positional rule and its dynamic program, and the
full-information limit constant.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize, special

from . import quadrature
from .core import VACUOUS, ArrivalRealization, Instance, Outcome, RankView


class ConvergenceError(ArithmeticError):
    """A root or integral failed to reach the requested tolerance."""


# ---------------------------------------------------------------------------
# Optimal time thresholds


@dataclass(frozen=True)
class ThresholdSequence:
    """Non-decreasing times t_1 <= t_2 <= ... in (0, 1).

    ``complements`` holds 1 - t_i computed directly, which keeps full relative
    precision for late thresholds close to 1.
    """

    thresholds: np.ndarray
    complements: np.ndarray

    def __post_init__(self):
        t = self.thresholds
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("need at least one threshold")
        if np.any(t <= 0) or np.any(t >= 1):
            raise ValueError("thresholds must lie strictly inside (0, 1)")
        if np.any(np.diff(t) < 0):
            raise ValueError("thresholds must be non-decreasing")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "ThresholdSequence":
        t = np.array(values, dtype=float)
        return cls(_readonly(t), _readonly(1.0 - t))

    @property
    def count(self) -> int:
        return len(self.thresholds)

    def __getitem__(self, i: int) -> float:
        """1-based access, t[1] is the first threshold."""
        if not 1 <= i <= self.count:
            raise IndexError(i)
        return float(self.thresholds[i - 1])

    def level(self, tau) -> np.ndarray | int:
        """Number of thresholds at or below tau: the sample rank in force at time tau."""
        return np.searchsorted(self.thresholds, tau, side="right")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


_INV = 1.0 / np.arange(1, 2)
_CACHE_LOCK = threading.Lock()
_DELTAS: list[float] = []


def _inverse_ints(m: int) -> np.ndarray:
    global _INV
    if len(_INV) < m:
        _INV = 1.0 / np.arange(1, max(m, 2 * len(_INV)) + 1)
    return _INV[:m]


def threshold_lhs(i: int, delta: float) -> float:
    """ln(1/t) + sum_{j<i} (t^-j - 1)/j at t = 1 - delta."""
    y = -math.log1p(-delta)
    m = i - 1
    if m == 0:
        return y
    inv = _inverse_ints(m)
    return y + float(np.dot(np.expm1(y / inv), inv))


def _lhs_slope(i: int, delta: float) -> float:
    # d/d(delta) of threshold_lhs; closed form of e^y * sum_{j=0}^{i-1} e^{jy}.
    y = -math.log1p(-delta)
    return math.exp(y) * math.expm1(i * y) / math.expm1(y)


def _solve_delta(i: int, hi: float, tol: float, max_iter: int = 200) -> float:
    """Root of threshold_lhs(i, .) = 1 in delta, bracketed Newton with bisection fallback."""
    if i == 1:
        return -math.expm1(-1.0)
    lo = hi
    while threshold_lhs(i, lo) >= 1.0:
        lo *= 0.5
        if lo < 1e-300:
            raise ConvergenceError(f"threshold {i}: no bracket")
    x = hi * (i - 1) / i
    if not lo < x < hi:
        x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g = threshold_lhs(i, x) - 1.0
        if abs(g) < 0.25 * tol:
            return x
        if g > 0:
            hi = x
        else:
            lo = x
        step = x - g / _lhs_slope(i, x)
        x = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    if abs(threshold_lhs(i, x) - 1.0) < tol:
        return x
    raise ConvergenceError(f"threshold {i}: residual above {tol}")


def solve_thresholds(count: int, tol: float = 1e-12) -> ThresholdSequence:
    """The optimal thresholds t*_1..t*_count.

    t*_i solves ln(1/t) + sum_{j=1}^{i-1} ((1/t)^j - 1)/j = 1. The left side falls
    in t and rises in i, so each root lies above the previous one and that root
    brackets the next solve. Roots are cached across calls.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    with _CACHE_LOCK:
        for i in range(len(_DELTAS) + 1, count + 1):
            hi = _DELTAS[-1] if _DELTAS else 1.0
            _DELTAS.append(_solve_delta(i, hi, tol))
        deltas = np.array(_DELTAS[:count])
    for i in range(count):
        if abs(threshold_lhs(i + 1, deltas[i]) - 1.0) >= tol:
            raise ConvergenceError(f"threshold {i + 1}: residual above {tol}")
    return ThresholdSequence(_readonly(1.0 - deltas), _readonly(deltas))


# ---------------------------------------------------------------------------
# Time-threshold rule


def alg_t_run(
    t: ThresholdSequence, arrivals: ArrivalRealization, instance: Instance
) -> int | None | Outcome:
    """Run the time-threshold rule; returns the accepted element index.

    An online element arriving at time tau with k thresholds at or below tau is
    accepted iff it is the best online value so far and fewer than k samples beat it.
    """
    if arrivals.n != instance.n:
        raise ValueError("arrivals and instance sizes differ")
    values = np.asarray(instance.values)
    mask = arrivals.sample_mask
    if mask.all():
        return VACUOUS
    samples = np.sort(values[mask])
    best = -math.inf
    for i in arrivals.arrival_order():
        if mask[i]:
            continue
        v = values[i]
        if v <= best:
            continue
        best = v
        above = len(samples) - np.searchsorted(samples, v, side="right")
        if above < t.level(arrivals.times[i]):
            return int(i)
    return None


def _stop_before_kernel(s: float, i: int) -> float:
    """sum_{j=1}^{i} int_s^1 (x - s) x^-j dx, by antiderivatives."""
    d = 1.0 - s
    total = d + s * math.log(s)
    if i >= 2:
        total += -math.log(s) - d
    if i >= 3:
        j = np.arange(3, i + 1, dtype=float)
        u = np.expm1((j - 2.0) * -math.log(s))
        total += float(np.sum(u / ((j - 2.0) * (j - 1.0)) - d / (j - 1.0)))
    return total


def threshold_term(i: int, t_i: float, p: float) -> float:
    """Per-index objective 1 - m - sum_j int_m^1 (x - m) x^-j dx with m = max(p, t_i)."""
    s = max(p, t_i)
    return 1.0 - s - _stop_before_kernel(s, i)


def _term_complement(t: ThresholdSequence, i: int, p: float) -> tuple[float, float]:
    ti = t.thresholds[i - 1]
    if ti > p:
        return float(ti), float(t.complements[i - 1])
    return p, 1.0 - p


def tail_terms_needed(t: ThresholdSequence, p: float, tail_tol: float) -> int | None:
    """Smallest I whose dropped tail is provably below tail_tol, or None if t is too short.

    Every later term is at most p^{i-1} (1 - max(p, t_I)), so the tail after I is
    bounded by (1 - max(p, t_I)) p^I / (1 - p).
    """
    if p == 0:
        return 1
    lp = math.log(p)
    for i in range(1, t.count + 1):
        _, d = _term_complement(t, i, p)
        if d == 0 or math.log(d) + i * lp - math.log1p(-p) < math.log(tail_tol):
            return i
    return None


def alg_t_guarantee(t: ThresholdSequence, p: float, tail_tol: float = 1e-12) -> float:
    """Limit success probability of the time-threshold rule as n grows."""
    if not 0 <= p < 1:
        raise ValueError(f"p must lie in [0, 1), got {p}")
    if tail_tol <= 0:
        raise ValueError("tail_tol must be positive")
    last = tail_terms_needed(t, p, tail_tol)
    if last is None:
        raise ValueError(f"{t.count} thresholds cannot reach tail_tol={tail_tol} at p={p}")
    total = 0.0
    for i in range(1, last + 1):
        s, d = _term_complement(t, i, p)
        weight = p ** (i - 1)
        total += weight * (d - _stop_before_kernel(s, i))
    return total


def ros_guarantee(p: float, tail_tol: float = 1e-12) -> float:
    """Guarantee of the optimal thresholds, solving as many as the tail bound needs."""
    if not 0 <= p < 1:
        raise ValueError(f"p must lie in [0, 1), got {p}")
    count = 64
    while True:
        t = solve_thresholds(count)
        if tail_terms_needed(t, p, tail_tol) is not None:
            return alg_t_guarantee(t, p, tail_tol)
        count *= 2


def alg_t_success_prob(
    t: ThresholdSequence,
    p: float,
    n: int,
    quad_tol: float = 1e-12,
    cdf_shift: int = 0,
) -> float:
    """Success probability of the time-threshold rule on n elements.

    P(max V acceptable) minus P(stop before max V). The second part integrates,
    for each rank i, the chance that the best online value before max V has i - 1
    samples above it and arrives in [max(p, t_i), tau) while at least i values
    arrive before tau. ``cdf_shift=1`` evaluates the binomial CDF one step further
    out, i.e. with at least i + 1 earlier arrivals required.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if t.count < n:
        raise ValueError(f"need {n} thresholds, have {t.count}")
    acceptable = p**n
    for i in range(1, n + 1):
        _, d = _term_complement(t, i, p)
        acceptable += p ** (i - 1) * d
    before = 0.0
    for i in range(1, n):
        weight = p ** (i - 1)
        if weight == 0:
            break
        s, _ = _term_complement(t, i, p)
        j = np.arange(1, i + 1)[:, None]

        def integrand(x, s=s, i=i, j=j):
            x = x[None, :]
            tail = special.bdtrc(i - j + cdf_shift, n - j, x)
            return np.sum((x - s) * x ** (-j) * tail, axis=0)

        before += weight * quadrature.integrate(integrand, s, 1.0, quad_tol)
    return acceptable - before


# ---------------------------------------------------------------------------
# Positional rule


@dataclass(frozen=True)
class EllFunction:
    """Sample rank to beat at each observed position 1..n.

    ``values[j - 1]`` is l(j). A value of 0 means nothing is accepted at j.
    """

    values: tuple[int, ...]

    def __init__(self, values: Sequence[int]):
        vals = tuple(int(v) for v in values)
        n = len(vals)
        if n == 0:
            raise ValueError("need at least one position")
        if any(v < 0 or v > n for v in vals):
            raise ValueError("each l(j) must lie in [0, n]")
        if any(a > b for a, b in zip(vals, vals[1:])):
            raise ValueError("l must be non-decreasing")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)

    def __call__(self, j: int) -> int:
        return self.values[j - 1]

    @classmethod
    def constant(cls, n: int, value: int) -> "EllFunction":
        return cls([value] * n)


def seq_ell_run(ell: EllFunction, h: int, ranks: Sequence[RankView]) -> int | None | Outcome:
    """Position of the first online value that is the best online so far and has
    fewer than l(position) samples above it; positions count samples too.
    """
    if not ranks:
        return VACUOUS
    for view in ranks:
        if view.position <= h:
            raise ValueError("online positions start after the h samples")
        if view.online_rank_best and view.overall_rank <= ell(view.position):
            return view.position
    return None


def seq_ell_success_given_h(n: int, h: int, ell: EllFunction) -> float:
    """Win probability of the positional rule given exactly h samples."""
    if not 0 <= h < n:
        raise ValueError("need 0 <= h < n")
    if ell.n != n:
        raise ValueError("ell is defined on a different size")
    cap = [min(ell(i), h + 1) for i in range(1, n + 1)]

    def prod(r: int, m: int) -> float:
        out = 1.0
        for j in range(cap[r - 1]):
            out *= (h - j) / (m - j)
        return out

    total = (1.0 - prod(h + 1, n)) / (n - h)
    for i in range(h + 1, n):
        inner = 0.0
        for r in range(h + 1, i + 1):
            inner += prod(r, i) / (i - h) - prod(r, n) / (n - h)
        total += inner / (n - i) - prod(i + 1, n) / (n - h)
    return total


def seq_ell_success(n: int, p: float, ell: EllFunction) -> float:
    """Mixture over the number of samples; all-sampled runs count as wins."""
    weights = special.binom(n, np.arange(n + 1)) * p ** np.arange(n + 1) * (1 - p) ** (n - np.arange(n + 1))
    total = weights[n]
    for h in range(n):
        if weights[h] > 0:
            total += weights[h] * seq_ell_success_given_h(n, h, ell)
    return float(total)


@dataclass(frozen=True)
class WinTable:
    """W[j, r]: win probability under optimal play after position j, when the best
    online value so far has rank r among the j observed. r = j + 1 stands for
    "no online value yet" (every newcomer beats it).
    """

    n: int
    W: np.ndarray

    def __call__(self, j: int, r: int) -> float:
        if not (0 <= j <= self.n and 1 <= r <= j + 1):
            raise IndexError((j, r))
        return float(self.W[j, r])

    def start_value(self, h: int) -> float:
        """Optimal win probability given h samples (h = n is a vacuous win)."""
        return 1.0 if h == self.n else float(self.W[h, h + 1])


def _stop_prob(n: int, j: int) -> np.ndarray:
    # out[r] = prod_{s<r} (j - s)/(n - s) for r = 0..j: chance that rank r at j is final.
    s = np.arange(j)
    return np.concatenate(([1.0], np.cumprod((j - s) / (n - s))))


def optimal_policy_dp(n: int) -> tuple[WinTable, EllFunction]:
    """Backward induction over positions; returns the win table and the induced l."""
    if n < 1:
        raise ValueError("n must be positive")
    W = np.zeros((n + 1, n + 2))
    for j in range(n - 1, -1, -1):
        stop = _stop_prob(n, j + 1)[1 : j + 2]
        best = np.maximum(W[j + 1, 1 : j + 2], stop)
        r = np.arange(1, j + 2)
        W[j, 1 : j + 2] = (j + 1 - r) / (j + 1) * W[j + 1, 1 : j + 2] + np.cumsum(best) / (j + 1)
    ell = []
    for j in range(1, n + 1):
        ok = np.flatnonzero(_stop_prob(n, j)[1 : j + 1] >= W[j, 1 : j + 1])
        ell.append(int(ok[-1]) + 1 if len(ok) else 0)
    return WinTable(n, _readonly(W)), EllFunction(ell)


def ell_star_condition(n: int, r: int, s: int) -> float:
    """sum_{i=r}^{n-1} (1 - prod_{j=0}^{s} (n-j)/(i-j)) / (n-i) + 1; -inf once some i <= s."""
    i = np.arange(r, n)
    if len(i) and i[0] <= s:
        return -math.inf
    log_ratio = (
        special.gammaln(n + 1) - special.gammaln(n - s) - special.gammaln(i + 1) + special.gammaln(i - s)
    )
    return float(np.sum((1.0 - np.exp(log_ratio)) / (n - i))) + 1.0


def ell_star_finite(n: int, r: int) -> int:
    """Smallest s >= 0 at which raising the sample rank at position r stops paying.

    At r = n the sum is empty and the condition never holds; the last position
    accepts any best-so-far, so n is returned.
    """
    if not 1 <= r <= n:
        raise ValueError("need 1 <= r <= n")
    if r == n:
        return n
    for s in range(n + 1):
        if ell_star_condition(n, r, s) <= 0:
            return s
    return n


def f_objective(n: int, h: int, r: int, s: int) -> float:
    """The part of the success probability controlled by l(r) = s (i = n term dropped)."""
    def prod(m: int) -> float:
        out = 1.0
        for j in range(s):
            out *= (h - j) / (m - j)
        return out

    pn = prod(n)
    total = -pn / (n - h)
    for i in range(r, n):
        total += (prod(i) / (i - h) - pn / (n - h)) / (n - i)
    return total


def ell_tilde(tau: float) -> int:
    """Limit sample rank at normalized time tau: smallest s >= 0 with
    ln(1/tau) + sum_{j=1}^{s} (tau^-j - 1)/j >= 1, i.e. the number of optimal
    thresholds strictly below tau.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    y = -math.log(tau)
    acc = y
    s = 0
    while acc < 1.0:
        s += 1
        acc += math.expm1(s * y) / s
    return s


# ---------------------------------------------------------------------------
# Full-information limit


@dataclass(frozen=True)
class GammaResult:
    c: float
    gamma: float
    tail_bound: float


def _ein(c: float) -> float:
    """int_0^1 (e^{cx} - 1)/x dx."""
    val, _ = sp_integrate.quad(lambda x: math.expm1(c * x) / x if x > 0 else c, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return val


def gamma_constants(tol: float = 1e-12) -> GammaResult:
    """c solving int_0^1 (e^{cx}-1)/x dx = 1, and gamma = e^-c + (e^c - 1 - c) E1(c)
    with E1(c) = int_1^inf e^{-cx}/x dx.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = 0.5, 1.5
    if not (_ein(lo) - 1.0) < 0 < (_ein(hi) - 1.0):
        raise ConvergenceError("root of the integral equation not bracketed")
    c = optimize.brentq(lambda x: _ein(x) - 1.0, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    if abs(_ein(c) - 1.0) > max(tol, 1e-13):
        raise ConvergenceError("integral equation residual above tolerance")
    # Cut the exponential-integral range where e^{-cX} < tol c; the dropped tail is
    # below e^{-cX}/(cX).
    upper = max(2.0, math.log(1.0 / (tol * c)) / c)
    e1, err = sp_integrate.quad(lambda x: math.exp(-c * x) / x, 1.0, upper, epsabs=tol * 1e-2, epsrel=1e-14, limit=200)
    tail = math.exp(-c * upper) / (c * upper)
    e1 += 0.5 * tail
    ec = math.exp(-c)
    gamma = ec + (math.expm1(c) - c) * e1
    return GammaResult(c, gamma, (math.expm1(c) - c) * (0.5 * tail + err))
