"""Instances, independent sampling, arrival times and the ordinal view of a run."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import rng


class Outcome(enum.Enum):
    """Marker for runs that end without any online element to choose."""

    VACUOUS = "vacuous"

    def __repr__(self) -> str:
        return f"Outcome.{self.name}"


VACUOUS = Outcome.VACUOUS


class TieError(ValueError):
    """Raised when values that must be pairwise distinct contain a tie."""


def _check_p(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return p


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Instance:
    """Distinct values plus an adversarial presentation order.

    ``order[i]`` is the (0-based) index of the element presented i-th.
    """

    values: tuple[float, ...]
    order: tuple[int, ...]

    def __init__(self, values: Iterable[float], order: Iterable[int] | None = None):
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ValueError("an instance needs at least one value")
        if len(set(vals)) != len(vals):
            raise TieError("instance values must be pairwise distinct")
        ordr = tuple(range(len(vals))) if order is None else tuple(int(i) for i in order)
        if sorted(ordr) != list(range(len(vals))):
            raise ValueError("order must be a permutation of the element indices")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "order", ordr)

    @property
    def n(self) -> int:
        return len(self.values)

    def presented(self) -> tuple[float, ...]:
        """Values in presentation order."""
        return tuple(self.values[i] for i in self.order)

    @classmethod
    def increasing(cls, n: int) -> "Instance":
        return cls(range(1, n + 1))


def read_instance(path: str | Path) -> Instance:
    """Parse one decimal per line; blank lines and ``#`` comments are skipped."""
    values = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            values.append(float(text))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a number: {text!r}") from None
    return Instance(values)


@dataclass(frozen=True)
class SamplingOutcome:
    """Which elements were sampled; ``sample_mask[i]`` is True iff element i is in S."""

    sample_mask: np.ndarray

    @property
    def n(self) -> int:
        return len(self.sample_mask)

    @property
    def sampled(self) -> tuple[int, ...]:
        return tuple(np.flatnonzero(self.sample_mask).tolist())

    @property
    def online(self) -> tuple[int, ...]:
        return tuple(np.flatnonzero(~self.sample_mask).tolist())


@dataclass(frozen=True)
class ArrivalRealization:
    """Arrival times in [0, 1); elements arriving before p form the sample."""

    times: np.ndarray
    p: float

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def sample_mask(self) -> np.ndarray:
        return self.times < self.p

    def outcome(self) -> SamplingOutcome:
        return SamplingOutcome(_frozen(self.sample_mask))

    def arrival_order(self) -> tuple[int, ...]:
        return tuple(np.argsort(self.times, kind="stable").tolist())


@dataclass(frozen=True)
class RankView:
    """What an ordinal policy sees when an online element is revealed.

    ``position`` counts every element observed so far, samples included, so the
    first online element of a run with h samples sits at position h + 1.
    """

    position: int
    online_rank_best: bool
    overall_rank: int


def sample(instance: Instance, p: float, seed: int) -> SamplingOutcome:
    """Put each element in S independently with probability p.

    Element i uses stream i of the seed, the same draw that ``draw_arrivals``
    turns into its arrival time, so both views of a seed agree on S.
    """
    _check_p(p)
    mask = rng.bernoulli(rng.check_seed(seed), np.arange(instance.n), 0, p)
    return SamplingOutcome(_frozen(mask))


def _arrival_times(seed: int, n: int) -> np.ndarray:
    ids = np.arange(n)
    times = rng.uniforms(seed, ids, 0)
    draw = 0
    # Ties have probability ~n^2 / 2^54; redraw the later copies until none remain.
    while True:
        _, first = np.unique(times, return_index=True)
        if len(first) == n:
            return times
        dup = np.setdiff1d(ids, first)
        draw += 1
        times[dup] = rng.uniforms(seed, dup, draw)


def draw_arrivals(n: int, p: float, seed: int) -> ArrivalRealization:
    """Independent uniform arrival times for n elements."""
    if n < 1:
        raise ValueError("n must be positive")
    _check_p(p)
    return ArrivalRealization(_frozen(_arrival_times(rng.check_seed(seed), n)), float(p))


def rank_stream(
    instance: Instance, outcome: SamplingOutcome, arrival_order: Sequence[int]
) -> list[RankView]:
    """One RankView per online element, in the given arrival order.

    Samples are known before any online element is revealed, whatever their
    place in ``arrival_order``; only strict comparisons are used.
    """
    n = instance.n
    if outcome.n != n:
        raise ValueError("outcome and instance sizes differ")
    if sorted(arrival_order) != list(range(n)):
        raise ValueError("arrival_order must be a permutation of the element indices")
    values = instance.values
    samples = [values[i] for i in outcome.sampled]
    if len(set(values)) != n:
        raise TieError("tied values reached rank_stream")
    seen = list(samples)
    best_online = None
    views = []
    for i in arrival_order:
        if outcome.sample_mask[i]:
            continue
        v = values[i]
        is_best = best_online is None or v > best_online
        if is_best:
            best_online = v
        seen.append(v)
        rank = 1 + sum(1 for w in seen if w > v)
        views.append(RankView(len(seen), is_best, rank))
    return views
