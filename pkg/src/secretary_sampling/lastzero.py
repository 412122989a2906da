"""The last-zero game and its conflict graph over bitstrings.

A bitstring of length n is stored as an integer whose most significant of the n
bits is the first character. A 1 is a sampled element, a 0 an online one; the
player wins by stopping exactly on the last 0. Two instances conflict when no
deterministic rule can win both; conflicts between consecutive sizes form a
forest in which the parent of I is I with its last 0 removed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import comb

from . import rng
from .aos import kmax_k

MAX_SIZE = 24

Policy = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, order=True)
class BitInstance:
    n: int
    bits: int

    def __post_init__(self):
        if not 1 <= self.n <= 64:
            raise ValueError("length must lie in [1, 64]")
        if not 0 <= self.bits < 1 << self.n:
            raise ValueError("bits do not fit the length")

    @classmethod
    def parse(cls, text: str) -> "BitInstance":
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a bitstring: {text!r}")
        return cls(len(text), int(text, 2))

    def __str__(self) -> str:
        return format(self.bits, f"0{self.n}b")

    @property
    def norm(self) -> int:
        return self.bits.bit_count()

    @property
    def zeros(self) -> int:
        return self.n - self.norm

    @property
    def trailing_ones(self) -> int:
        v, t = self.bits, 0
        while t < self.n and v & 1:
            v >>= 1
            t += 1
        return t


def _need_zero(inst: BitInstance) -> None:
    if inst.zeros == 0:
        raise ValueError(f"{inst} has no 0")


def in_conflict(a: BitInstance, b: BitInstance) -> bool:
    """Same norm, and the longer string agrees with the shorter one up to its last 0."""
    _need_zero(a)
    _need_zero(b)
    if a.n == b.n:
        return False
    small, large = (a, b) if a.n < b.n else (b, a)
    if small.norm != large.norm:
        return False
    r = small.n - small.trailing_ones
    return small.bits >> (small.n - r) == large.bits >> (large.n - r)


def degree(inst: BitInstance) -> int:
    """Number of children: i for the suffix 0 1^(i-1), and 0 for all-ones."""
    return 0 if inst.zeros == 0 else inst.trailing_ones + 1


def children(inst: BitInstance) -> list[BitInstance]:
    """All size n+1 instances obtained by inserting a 0 after the last 0, by decreasing degree."""
    if inst.zeros == 0:
        return []
    t = inst.trailing_ones
    head = (inst.bits >> t) << (t + 1)
    out = []
    for a in range(t + 1):
        tail = (((1 << a) - 1) << (t - a + 1)) | ((1 << (t - a)) - 1)
        out.append(BitInstance(inst.n + 1, head | tail))
    return out


def parent(inst: BitInstance) -> BitInstance | None:
    """Remove the last 0; instances with fewer than two zeros have no parent."""
    if inst.zeros < 2:
        return None
    t = inst.trailing_ones
    return BitInstance(inst.n - 1, ((inst.bits >> (t + 1)) << t) | ((1 << t) - 1))


def node_weight(inst: BitInstance, p: float) -> float:
    m = inst.norm
    return p**m * (1 - p) ** (inst.n - m)


# ---------------------------------------------------------------------------
# Vectorized views of a whole size


def _check_size(n: int) -> None:
    if not 1 <= n <= MAX_SIZE:
        raise ValueError(f"size must lie in [1, {MAX_SIZE}], got {n}")


def all_codes(n: int) -> np.ndarray:
    _check_size(n)
    return np.arange(1 << n, dtype=np.int64)


def popcounts(codes: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(codes.shape, dtype=np.int64)
    for k in range(n):
        out += (codes >> k) & 1
    return out


def trailing_ones(codes: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(codes.shape, dtype=np.int64)
    run = np.ones(codes.shape, dtype=bool)
    for k in range(n):
        run &= ((codes >> k) & 1).astype(bool)
        out += run
    return out


def degrees(n: int) -> np.ndarray:
    codes = all_codes(n)
    d = trailing_ones(codes, n) + 1
    d[-1] = 0
    return d


def weights(n: int, p: float) -> np.ndarray:
    m = popcounts(all_codes(n), n)
    return p**m * (1 - p) ** (n - m)


def parents(n: int) -> np.ndarray:
    """Parent code (size n-1) of every size-n code, or -1 when there is none."""
    codes = all_codes(n)
    t = trailing_ones(codes, n)
    zeros = n - popcounts(codes, n)
    par = ((codes >> (t + 1)) << t) | ((1 << t) - 1)
    return np.where(zeros >= 2, par, -1)


def degree_census(n: int) -> dict[int, int]:
    d, counts = np.unique(degrees(n), return_counts=True)
    return dict(zip(d.tolist(), counts.tolist()))


def weight_census(n: int, p: float) -> dict[int, float]:
    """Total weight of the size-n nodes of each degree."""
    d = degrees(n)
    w = weights(n, p)
    return {int(k): float(w[d == k].sum()) for k in np.unique(d)}


def child_weight_census(n: int, p: float) -> dict[tuple[int, int], float]:
    """Total weight of size n+1 nodes of degree j whose parent has degree i, keyed (i, j)."""
    par = parents(n + 1)
    has = par >= 0
    di = degrees(n)[par[has]]
    dj = degrees(n + 1)[has]
    w = weights(n + 1, p)[has]
    out: dict[tuple[int, int], float] = {}
    for i, j, x in zip(di.tolist(), dj.tolist(), w.tolist()):
        out[(i, j)] = out.get((i, j), 0.0) + x
    return out


def edges(max_size: int) -> Iterator[tuple[BitInstance, BitInstance]]:
    """Parent-child conflict edges between sizes 1..max_size."""
    for n in range(2, max_size + 1):
        for code, par in enumerate(parents(n).tolist()):
            if par >= 0:
                yield BitInstance(n - 1, par), BitInstance(n, code)


def edge_list(max_size: int) -> str:
    """One ``parent child`` line per edge, instances as 0/1 strings."""
    return "".join(f"{a} {b}\n" for a, b in edges(max_size))


def edges_dot(max_size: int) -> str:
    lines = ["digraph conflict {"]
    lines += [f'  "{a}" -> "{b}";' for a, b in edges(max_size)]
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Stopping rules on counts


def kmax_policy(k: int) -> Policy:
    """Stop at a 0 once at most k - 1 ones remain unseen, the k-max threshold on counts."""
    if k < 1:
        raise ValueError("k must be at least 1")

    def policy(zeros_seen, ones_seen, total_ones):
        return total_ones - ones_seen <= k - 1

    policy.__name__ = f"kmax_policy({k})"
    return policy


def first_zero_policy(zeros_seen, ones_seen, total_ones):
    return np.ones(np.shape(zeros_seen), dtype=bool)


def play(policy: Policy, bits: np.ndarray) -> np.ndarray:
    """Replay a counts-only rule on rows of a 0/1 matrix; True where it stops on the last 0.

    The rule is consulted at every 0 with the zeros seen (including this one), the
    ones seen, and the total number of ones. Rows without a 0 are losses.
    """
    bits = np.asarray(bits, dtype=bool)
    total = bits.sum(axis=1)
    ones_seen = np.cumsum(bits, axis=1)
    zeros_seen = np.cumsum(~bits, axis=1)
    stop = ~bits & np.asarray(policy(zeros_seen, ones_seen, total[:, None]), dtype=bool)
    has_stop = stop.any(axis=1)
    first_stop = np.argmax(stop, axis=1)
    n = bits.shape[1]
    last_zero = n - 1 - np.argmax(~bits[:, ::-1], axis=1)
    return has_stop & (first_stop == last_zero)


def code_bits(codes: np.ndarray, n: int) -> np.ndarray:
    shifts = np.arange(n - 1, -1, -1)
    return ((codes[:, None] >> shifts) & 1).astype(bool)


def winning_codes(policy: Policy, n: int) -> np.ndarray:
    """Boolean mask over all size-n instances on which the rule wins."""
    out = np.zeros(1 << n, dtype=bool)
    chunk = 1 << 16
    for lo in range(0, 1 << n, chunk):
        codes = np.arange(lo, min(lo + chunk, 1 << n), dtype=np.int64)
        out[lo : lo + len(codes)] = play(policy, code_bits(codes, n))
    return out


def simulate_last_zero(policy: Policy, n: int, p: float, seed: int) -> bool:
    """One game: bit i is 1 when the uniform of stream i is below p."""
    if n < 1:
        raise ValueError("n must be positive")
    bits = rng.bernoulli(rng.check_seed(seed), np.arange(n), 0, p)
    return bool(play(policy, bits[None, :])[0])


# ---------------------------------------------------------------------------
# Strategies on a window of sizes


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def removed_from(start: int, selected: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Per-size masks of nodes with a selected ancestor inside the window."""
    removed = [np.zeros(1 << start, dtype=bool)]
    for off in range(1, len(selected)):
        covered = selected[off - 1] | removed[off - 1]
        par = parents(start + off)
        removed.append(np.where(par >= 0, covered[np.maximum(par, 0)], False))
    return removed


@dataclass(frozen=True)
class WindowStrategy:
    """Selections on sizes start..end, with removed sets derived eagerly."""

    start: int
    end: int
    selected: tuple[np.ndarray, ...]
    removed: tuple[np.ndarray, ...]

    @classmethod
    def build(cls, start: int, end: int, selected: Sequence[np.ndarray]) -> "WindowStrategy":
        _check_window(start, end)
        if len(selected) != end - start + 1:
            raise ValueError("one selection mask per size is required")
        sel = [np.array(s, dtype=bool) for s in selected]
        for off, s in enumerate(sel):
            if s.shape != (1 << (start + off),):
                raise ValueError(f"mask for size {start + off} has the wrong length")
        rem = removed_from(start, sel)
        return cls(start, end, tuple(map(_readonly, sel)), tuple(map(_readonly, rem)))

    @property
    def sizes(self) -> range:
        return range(self.start, self.end + 1)

    def _off(self, size: int) -> int:
        if size not in self.sizes:
            raise ValueError(f"size {size} outside window [{self.start}, {self.end}]")
        return size - self.start

    def selected_at(self, size: int) -> np.ndarray:
        return self.selected[self._off(size)]

    def removed_at(self, size: int) -> np.ndarray:
        return self.removed[self._off(size)]

    def selected_nodes(self, size: int) -> list[BitInstance]:
        return [BitInstance(size, int(c)) for c in np.flatnonzero(self.selected_at(size))]

    def is_valid(self) -> bool:
        """No selection sits below another selection, and all-ones is never selected."""
        return all(not (s & r).any() and not s[-1] for s, r in zip(self.selected, self.removed))


def _check_window(start: int, end: int) -> None:
    if not 1 <= start <= end <= MAX_SIZE:
        raise ValueError(f"window must satisfy 1 <= start <= end <= {MAX_SIZE}")


def fill_in(start: int, end: int, p: float) -> WindowStrategy:
    """Select every non-removed node of degree <= floor(1/(1-p)), and every
    non-removed node at the last size.
    """
    _check_window(start, end)
    k = kmax_k(p)
    sel: list[np.ndarray] = []
    removed = np.zeros(1 << start, dtype=bool)
    for size in range(start, end + 1):
        if size > start:
            covered = sel[-1] | removed
            par = parents(size)
            removed = np.where(par >= 0, covered[np.maximum(par, 0)], False)
        d = degrees(size)
        ok = ~removed & (d >= 1)
        if size < end:
            ok &= d <= k
        sel.append(ok)
    return WindowStrategy.build(start, end, sel)


def kmax_selection(start: int, end: int, k: int) -> WindowStrategy:
    """The instances the k-max rule wins, size by size."""
    _check_window(start, end)
    pol = kmax_policy(k)
    return WindowStrategy.build(start, end, [winning_codes(pol, s) for s in range(start, end + 1)])


def random_strategy(start: int, end: int, gen: np.random.Generator, rate: float = 0.5) -> WindowStrategy:
    """Greedy random valid strategy: each non-removed node joins with probability rate."""
    _check_window(start, end)
    sel: list[np.ndarray] = []
    removed = np.zeros(1 << start, dtype=bool)
    for size in range(start, end + 1):
        if size > start:
            covered = sel[-1] | removed
            par = parents(size)
            removed = np.where(par >= 0, covered[np.maximum(par, 0)], False)
        pick = (gen.random(1 << size) < rate) & ~removed
        pick[-1] = False
        sel.append(pick)
    return WindowStrategy.build(start, end, sel)


def _descendants(strategy: WindowStrategy, node: BitInstance) -> list[np.ndarray]:
    out = []
    cur = np.zeros(1 << node.n, dtype=bool)
    cur[node.bits] = True
    out.append(cur)
    for size in range(node.n + 1, strategy.end + 1):
        par = parents(size)
        cur = np.where(par >= 0, cur[np.maximum(par, 0)], False)
        out.append(cur)
    return out


def apply_local_operator(strategy: WindowStrategy, node: BitInstance, which: str, p: float) -> WindowStrategy:
    """Split a high-degree selected node into its children, or fill a low-degree free node.

    With k = floor(1/(1-p)), a split needs degree > k and a fill needs 1 <= degree <= k;
    neither lowers the window-average performance.
    """
    off = strategy._off(node.n)
    k = kmax_k(p)
    d = degree(node)
    sel = [s.copy() for s in strategy.selected]
    if which == "split":
        if not sel[off][node.bits]:
            raise ValueError(f"split: {node} is not selected")
        if d <= k:
            raise ValueError(f"split: degree {d} of {node} is not above 1/(1-p)")
        if node.n >= strategy.end:
            raise ValueError(f"split: {node} is at the last size of the window")
        sel[off][node.bits] = False
        for child in children(node):
            sel[off + 1][child.bits] = True
    elif which == "fill":
        if sel[off][node.bits] or strategy.removed[off][node.bits]:
            raise ValueError(f"fill: {node} is already selected or removed")
        if not 1 <= d <= k:
            raise ValueError(f"fill: degree {d} of {node} is not in [1, 1/(1-p)]")
        sel[off][node.bits] = True
        for extra, desc in enumerate(_descendants(strategy, node)[1:], 1):
            sel[off + extra] &= ~desc
    else:
        raise ValueError(f"unknown operator {which!r}")
    return WindowStrategy.build(strategy.start, strategy.end, sel)


def performance(strategy: WindowStrategy, size: int, p: float) -> float:
    return float(weights(size, p)[strategy.selected_at(size)].sum())


def cover_ratio(strategy: WindowStrategy, size: int, p: float) -> float:
    mask = strategy.selected_at(size) | strategy.removed_at(size)
    return float(weights(size, p)[mask].sum())


def average_performance(strategy: WindowStrategy, p: float) -> float:
    return float(np.mean([performance(strategy, s, p) for s in strategy.sizes]))


# ---------------------------------------------------------------------------
# Colored variant


@dataclass(frozen=True)
class ColoredNode:
    """A red prefix of length m plus b blue ones among the remaining n - m positions."""

    red: BitInstance
    blue_ones: int
    n: int

    def __post_init__(self):
        if self.red.n > self.n:
            raise ValueError("red part longer than the instance")
        if not 0 <= self.blue_ones <= self.n - self.red.n:
            raise ValueError("blue ones must lie in [0, n - m]")


def colored_weight(node: ColoredNode, p: float) -> float:
    m, r, b, n = node.red.n, node.red.norm, node.blue_ones, node.n
    return p ** (r + b) * (1 - p) ** (n - r - b) * float(comb(n - m, b, exact=True))


def colored_children(node: ColoredNode) -> list[ColoredNode]:
    if node.red.n >= node.n or node.blue_ones > node.n - node.red.n - 1:
        return []
    return [ColoredNode(c, node.blue_ones, node.n) for c in children(node.red)]
