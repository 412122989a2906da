"""Monte Carlo harness and exhaustive oracles.

Trial t draws everything from the child seed ``derive_seeds(seed, t)``; element i
of that trial uses stream i, the same convention as ``core.sample`` and
``core.draw_arrivals``. Win counts therefore do not depend on how trials are
batched or spread over workers.
"""

from __future__ import annotations

import itertools
import math
import os
from functools import lru_cache
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import stats

from . import lastzero, rng
from .aos import kmax_k
from .core import read_instance
from .ros import EllFunction, ThresholdSequence, optimal_policy_dp, solve_thresholds

WORKERS_ENV = "SECSAMP_WORKERS"
BLOCK = 1 << 14
MIN_CI_TRIALS = 10_000
_CELLS = 1 << 21  # matrix entries per vectorized chunk
_LAZY_STREAM = 1 << 40


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if workers < 1:
        raise ValueError("worker count must be positive")
    return workers


# ---------------------------------------------------------------------------
# Instance generators


GENERATOR_KINDS = ("increasing", "increasing-then-drop", "uniform-random", "from-file")


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n: int
    drop_point: int | None = None
    path: str | None = None
    _fixed: tuple[float, ...] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator {self.kind!r}")
        if self.kind == "from-file":
            if self.path is None:
                raise ValueError("from-file needs a path")
            inst = read_instance(self.path)
            object.__setattr__(self, "_fixed", inst.values)
            object.__setattr__(self, "n", inst.n)
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.kind == "increasing-then-drop":
            if self.drop_point is None or not 1 <= self.drop_point <= self.n:
                raise ValueError("increasing-then-drop needs 1 <= m <= n")

    @property
    def label(self) -> str:
        if self.kind == "increasing-then-drop":
            return f"{self.kind}(m={self.drop_point})"
        if self.kind == "from-file":
            return f"{self.kind}({Path(self.path).name})"
        return self.kind

    def values(self, trial_seeds: np.ndarray) -> np.ndarray:
        """Presentation-ordered values, one row per trial (or one shared row)."""
        n = self.n
        if self.kind == "increasing":
            return np.arange(1.0, n + 1)[None, :]
        if self.kind == "increasing-then-drop":
            m = self.drop_point
            # Positive increasing prefix, then arbitrary negatives.
            return np.concatenate((np.arange(1.0, m + 1), -np.arange(1.0, n - m + 1)))[None, :]
        if self.kind == "uniform-random":
            return rng.uniforms(trial_seeds[:, None], np.arange(n)[None, :], 1)
        return np.array(self._fixed)[None, :]


# ---------------------------------------------------------------------------
# Engines: each maps an array of trial seeds to a boolean win array


def _element_uniforms(trial_seeds: np.ndarray, n: int) -> np.ndarray:
    return rng.uniforms(trial_seeds[:, None], np.arange(n)[None, :], 0)


def _element_bits(trial_seeds: np.ndarray, n: int, p: float) -> np.ndarray:
    return rng.bernoulli(trial_seeds[:, None], np.arange(n)[None, :], 0, p)


def _aos_engine(rule: str, gen: GeneratorSpec, p: float, k: int | None) -> Callable:
    n = gen.n

    def run(trial_seeds: np.ndarray) -> np.ndarray:
        vals = np.broadcast_to(gen.values(trial_seeds), (len(trial_seeds), n))
        sampled = _element_bits(trial_seeds, n, p)
        h = sampled.sum(axis=1)
        ranked = -np.sort(-np.where(sampled, vals, -np.inf), axis=1)
        if rule == "kmax":
            thr = ranked[:, k - 1] if k <= n else np.full(len(h), -np.inf)
        elif rule == "kmax-unknown-p":
            kk = np.where(h < n, n // np.maximum(n - h, 1), 1)
            thr = np.take_along_axis(ranked, (kk - 1)[:, None], axis=1)[:, 0]
        else:
            thr = np.full(len(h), -np.inf)
        online = ~sampled
        cand = online & (vals > thr[:, None])
        stop = np.argmax(cand, axis=1)
        best = np.max(np.where(online, vals, -np.inf), axis=1)
        chosen = np.take_along_axis(vals, stop[:, None], axis=1)[:, 0]
        return (h == n) | (cand.any(axis=1) & (chosen == best))

    return run


def _value_ranks(vals: np.ndarray) -> np.ndarray:
    return np.argsort(np.argsort(vals, axis=1), axis=1)


def _ros_direct_engine(gen: GeneratorSpec, p: float, level: Callable) -> Callable:
    """Random arrival times per element; ``level(times_sorted, positions)`` gives the
    sample rank to beat for each arrival.
    """
    n = gen.n

    def run(trial_seeds: np.ndarray) -> np.ndarray:
        b = len(trial_seeds)
        times = _element_uniforms(trial_seeds, n)
        ranks = np.broadcast_to(_value_ranks(np.broadcast_to(gen.values(trial_seeds), (b, n))), (b, n))
        sampled = times < p
        by_rank = np.zeros((b, n), dtype=np.int64)
        np.put_along_axis(by_rank, ranks, sampled.astype(np.int64), axis=1)
        # above[r] = samples with rank > r
        above = np.cumsum(by_rank[:, ::-1], axis=1)[:, ::-1] - by_rank
        order = np.argsort(times, axis=1, kind="stable")
        t_sorted = np.take_along_axis(times, order, axis=1)
        r_sorted = np.take_along_axis(ranks, order, axis=1)
        online = t_sorted >= p
        run_max = np.maximum.accumulate(np.where(online, r_sorted, -1), axis=1)
        fresh = online & (r_sorted == run_max)
        beaten_by = np.take_along_axis(above, r_sorted, axis=1)
        acc = fresh & (beaten_by < level(t_sorted, np.arange(1, n + 1)[None, :]))
        stop = np.argmax(acc, axis=1)
        chosen = np.take_along_axis(r_sorted, stop[:, None], axis=1)[:, 0]
        no_online = ~online.any(axis=1)
        return no_online | (acc.any(axis=1) & (chosen == run_max[:, -1]))

    return run


def _alg_t_lazy_engine(n: int, p: float, t: ThresholdSequence) -> Callable:
    """Exact sampler of the time-threshold rule that only draws what decides the game.

    Values are revealed from the top. The best online value (rank J, time tau) is
    preceded by J - 1 samples; among lower ranks the first one arriving in
    [p, tau) is the only earlier online value that could be accepted, and every
    earlier record is weaker. Only these two candidates need checking.
    """

    def run(trial_seeds: np.ndarray) -> np.ndarray:
        u = rng.uniforms(trial_seeds[:, None], _LAZY_STREAM, np.arange(5)[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            if p > 0:
                first_online = 1 + np.floor(np.log1p(-u[:, 0]) / math.log(p))
            else:
                first_online = np.ones(len(u))
            tau = p + (1 - p) * u[:, 1]
            q = tau - p
            gap = 1 + np.floor(np.log1p(-u[:, 2]) / np.log1p(-q))
        gap = np.where(q > 0, gap, np.inf)
        vacuous = first_online > n
        best_ok = first_online - 1 < t.level(tau)
        exists = ~vacuous & (first_online + gap <= n)
        between = np.zeros(len(u))
        if exists.any():
            trials = gap[exists] - 1
            share = p / (1 - q[exists])
            between[exists] = stats.binom.ppf(1.0 - u[exists, 3], trials, share)
        tau_rival = p + q * u[:, 4]
        rival_ok = exists & (first_online - 1 + between < t.level(tau_rival))
        return vacuous | (best_ok & ~rival_ok)

    run.width = 8
    return run


def _last_zero_engine(policy: lastzero.Policy, n: int, p: float) -> Callable:
    def run(trial_seeds: np.ndarray) -> np.ndarray:
        return lastzero.play(policy, _element_bits(trial_seeds, n, p))

    return run


# ---------------------------------------------------------------------------
# Reports and the trial runner


@dataclass(frozen=True)
class TrialReport:
    policy: str
    generator: str
    n: int
    p: float
    trials: int
    wins: int
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def estimate(self) -> float:
        return self.wins / self.trials

    @property
    def ci_halfwidth(self) -> float | None:
        """3-sigma normal half-width; withheld below 10^4 trials."""
        if self.trials < MIN_CI_TRIALS:
            return None
        e = self.estimate
        return 3.0 * math.sqrt(e * (1.0 - e) / self.trials)

    def contains(self, value: float) -> bool:
        ci = self.ci_halfwidth
        if ci is None:
            raise ValueError(f"need at least {MIN_CI_TRIALS} trials for an interval")
        return abs(self.estimate - value) <= ci

    def to_dict(self) -> dict[str, Any]:
        return {
            "policy": self.policy,
            "generator": self.generator,
            "n": self.n,
            "p": self.p,
            "trials": self.trials,
            "wins": self.wins,
            "estimate": self.estimate,
            "ci": self.ci_halfwidth,
            "seed": self.seed,
            "params": dict(self.params),
        }


POLICIES = ("kmax", "kmax-unknown-p", "first-online", "alg-t", "seq-ell", "last-zero-kmax")


def _thresholds_for(n: int, p: float) -> ThresholdSequence:
    # Enough thresholds that the cap on the rank in force is never binding:
    # a trial needs more than `count` samples above its best online value.
    return solve_thresholds(max(64, min(n, 20_000)))


def make_engine(policy: str, gen: GeneratorSpec, p: float, **params) -> tuple[Callable, dict]:
    n = gen.n
    if policy in ("kmax", "last-zero-kmax"):
        k = int(params.get("k") or kmax_k(p))
        if policy == "kmax":
            return _aos_engine("kmax", gen, p, k), {"k": k}
        if gen.kind != "increasing":
            raise ValueError("last-zero-kmax plays the increasing instance only")
        return _last_zero_engine(lastzero.kmax_policy(k), n, p), {"k": k}
    if policy in ("kmax-unknown-p", "first-online"):
        return _aos_engine(policy, gen, p, None), {}
    if policy == "alg-t":
        count = int(params.get("count") or 0)
        t = solve_thresholds(count) if count else _thresholds_for(n, p)
        engine = params.get("engine") or "lazy"
        if engine == "lazy":
            return _alg_t_lazy_engine(n, p, t), {"count": t.count, "engine": engine}
        if engine == "direct":
            return _ros_direct_engine(gen, p, lambda ts, pos: t.level(ts)), {"count": t.count, "engine": engine}
        raise ValueError(f"unknown engine {engine!r}")
    if policy == "seq-ell":
        ell = params.get("ell")
        if ell is None:
            ell = optimal_policy_dp(n)[1]
        if not isinstance(ell, EllFunction) or ell.n != n:
            raise ValueError("seq-ell needs an EllFunction of matching size")
        table = np.array(ell.values)
        return _ros_direct_engine(gen, p, lambda ts, pos: table[pos - 1]), {"ell": list(ell.values)}
    raise ValueError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")


def _count_block(engine: Callable, seed: int, lo: int, hi: int, n: int) -> int:
    # Engines that do not materialize the instance declare their own row width.
    step = max(1, _CELLS // max(getattr(engine, "width", n), 1))
    wins = 0
    for a in range(lo, hi, step):
        ids = np.arange(a, min(a + step, hi), dtype=np.uint64)
        wins += int(np.count_nonzero(engine(rng.derive_seeds(seed, ids))))
    return wins


def run_trials(
    policy: str,
    gen: GeneratorSpec,
    p: float,
    trials: int,
    seed: int,
    workers: int | None = None,
    **params,
) -> TrialReport:
    """Play ``trials`` independent games and count wins (empty V counts as a win)."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    seed = rng.check_seed(seed)
    engine, used = make_engine(policy, gen, p, **params)
    blocks = [(lo, min(lo + BLOCK, trials)) for lo in range(0, trials, BLOCK)]
    workers = worker_count(workers)
    if workers == 1 or len(blocks) == 1:
        wins = sum(_count_block(engine, seed, lo, hi, gen.n) for lo, hi in blocks)
    else:
        with ThreadPoolExecutor(workers) as pool:
            wins = sum(pool.map(lambda b: _count_block(engine, seed, b[0], b[1], gen.n), blocks))
    return TrialReport(policy, gen.label, gen.n, p, trials, wins, seed, used)


# ---------------------------------------------------------------------------
# Exhaustive oracles


def oracle_aos_exact(policy: lastzero.Policy, n: int, p: float, empty_online: str = "win") -> float:
    """Exact win probability of a counts-only rule on the increasing instance.

    Sums the weight of every sampling pattern the rule wins. ``empty_online``
    scores the all-sampled pattern: "win" by vacuity, "lose" as in the last-zero game.
    """
    if not 1 <= n <= lastzero.MAX_SIZE:
        raise ValueError(f"n must lie in [1, {lastzero.MAX_SIZE}]")
    if empty_online not in ("win", "lose"):
        raise ValueError("empty_online must be 'win' or 'lose'")
    wins = lastzero.winning_codes(policy, n)
    total = float(lastzero.weights(n, p)[wins].sum())
    if empty_online == "win":
        total += p**n
    return total


def oracle_aos_by_h(policy: lastzero.Policy, n: int) -> np.ndarray:
    """Fraction of the C(n, h) sampling patterns with h samples that the rule wins, h = 0..n.

    The all-sampled pattern counts as a win.
    """
    if not 1 <= n <= lastzero.MAX_SIZE:
        raise ValueError(f"n must lie in [1, {lastzero.MAX_SIZE}]")
    wins = lastzero.winning_codes(policy, n)
    wins[-1] = True
    h = lastzero.popcounts(lastzero.all_codes(n), n)
    won = np.bincount(h[wins], minlength=n + 1)
    total = np.bincount(h, minlength=n + 1)
    return won / total


def unknown_p_policy(n: int) -> lastzero.Policy:
    """Counts-only form of the k-max rule with k = floor(n / (n - h))."""

    def policy(zeros_seen, ones_seen, total_ones):
        k = n // np.maximum(n - total_ones, 1)
        return total_ones - ones_seen <= k - 1

    return policy


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    out = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    out.setflags(write=False)
    return out


def oracle_ros_exact(ell: EllFunction, n: int, h: int) -> float:
    """Exact win frequency of the positional rule over all n! arrival orders,
    the first h positions being samples.
    """
    if not 1 <= n <= 8:
        raise ValueError("n must lie in [1, 8]")
    if not 0 <= h <= n:
        raise ValueError("need 0 <= h <= n")
    if ell.n != n:
        raise ValueError("ell is defined on a different size")
    if h == n:
        return 1.0
    perms = _permutations(n)
    count = len(perms)
    samples = perms[:, :h]
    best_online = np.full(count, -1)
    stopped = np.zeros(count, dtype=bool)
    choice = np.full(count, -1)
    for pos in range(h, n):
        v = perms[:, pos]
        fresh = v > best_online
        best_online = np.maximum(best_online, v)
        beaten_by = (samples > v[:, None]).sum(axis=1)
        accept = ~stopped & fresh & (beaten_by < ell(pos + 1))
        choice[accept] = v[accept]
        stopped |= accept
    return float(np.mean(stopped & (choice == best_online)))
