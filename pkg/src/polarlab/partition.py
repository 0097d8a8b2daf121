"""Balanced and stable partitions under a binary operation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import (AmbiguousResidue, BudgetExceeded, NotAPartition, NotErgodic, ParseError,
                     SizeCapExceeded)
from .magma import CayleyTable, is_ergodic

MAX_ENUM_SIZE = 10
MAX_DP_SIZE = 8
MAX_DP_STEPS = 100_000


@dataclass(frozen=True)
class Partition:
    """Partition of {0..n-1} in canonical form (sorted blocks, ordered by minimum)."""

    n: int
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(sorted(tuple(sorted(int(x) for x in b)) for b in self.blocks))
        seen = [x for b in blocks for x in b]
        if any(len(b) == 0 for b in blocks):
            raise ValueError("empty block")
        if sorted(seen) != list(range(self.n)):
            raise ValueError(f"blocks {blocks} do not partition 0..{self.n - 1}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_masks(cls, n: int, masks: Iterable[int]) -> "Partition":
        return cls(n, tuple(tuple(i for i in range(n) if m >> i & 1) for m in masks))

    @classmethod
    def parse(cls, text: str, n: Optional[int] = None) -> "Partition":
        """Parse "0,2|1,3"."""
        try:
            blocks = [tuple(int(t) for t in part.split(",")) for part in text.strip().split("|")]
        except ValueError:
            raise ParseError(f"malformed partition {text!r}") from None
        size = n if n is not None else sum(len(b) for b in blocks)
        try:
            return cls(size, tuple(blocks))
        except ValueError as e:
            raise ParseError(str(e)) from None

    def __str__(self) -> str:
        return "|".join(",".join(map(str, b)) for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def is_balanced(self) -> bool:
        return len({len(b) for b in self.blocks}) == 1

    @property
    def block_size(self) -> int:
        """Common block size; only meaningful for balanced partitions."""
        if not self.is_balanced:
            raise ValueError("partition is not balanced")
        return len(self.blocks[0])

    @property
    def masks(self) -> tuple:
        return tuple(sum(1 << x for x in b) for b in self.blocks)

    def index(self, x: int) -> int:
        for i, b in enumerate(self.blocks):
            if x in b:
                return i
        raise ValueError(f"{x} not in ground set")

    def labels(self) -> np.ndarray:
        out = np.empty(self.n, dtype=int)
        for i, b in enumerate(self.blocks):
            out[list(b)] = i
        return out

    def refines(self, other: "Partition") -> bool:
        """Each block of self lies inside a block of other."""
        lab = other.labels()
        return all(len({lab[x] for x in b}) == 1 for b in self.blocks)

    def uniform_on_block(self, i: int) -> np.ndarray:
        v = np.zeros(self.n)
        v[list(self.blocks[i])] = 1.0 / len(self.blocks[i])
        return v


def singletons(n: int) -> Partition:
    return Partition(n, tuple((i,) for i in range(n)))


def whole(n: int) -> Partition:
    return Partition(n, (tuple(range(n)),))


def proj(P: Partition, x: int) -> int:
    return P.index(x)


def meet(P1: Partition, P2: Partition) -> Partition:
    if P1.n != P2.n:
        raise ValueError("ground sizes differ")
    blocks = [tuple(set(a) & set(b)) for a in P1.blocks for b in P2.blocks]
    return Partition(P1.n, tuple(b for b in blocks if b))


def balanced_partitions(n: int, block_size: Optional[int] = None,
                        max_size: int = MAX_ENUM_SIZE) -> Iterator[Partition]:
    """All partitions of {0..n-1} into equal-size blocks."""
    if n > max_size:
        raise SizeCapExceeded(f"balanced partition enumeration capped at n={max_size}")
    sizes = [block_size] if block_size else [d for d in range(1, n + 1) if n % d == 0]
    for d in sizes:
        for blocks in _split(tuple(range(n)), d):
            yield Partition(n, blocks)


def _split(items: tuple, d: int):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for others in combinations(rest, d - 1):
        remaining = tuple(x for x in rest if x not in others)
        for tail in _split(remaining, d):
            yield ((first,) + others,) + tail


# products of subsets

class _SetMul:
    """Bitmask products A*B for one operation, memoized."""

    def __init__(self, op: CayleyTable):
        self.n = op.size
        self.table = op.table
        self._elem = {}

    def elem_times(self, a: int, bmask: int) -> int:
        key = (a, bmask)
        r = self._elem.get(key)
        if r is None:
            r = 0
            row = self.table[a]
            m, b = bmask, 0
            while m:
                if m & 1:
                    r |= 1 << row[b]
                m >>= 1
                b += 1
            self._elem[key] = r
        return r

    def times(self, amask: int, bmask: int) -> int:
        r, m, a = 0, amask, 0
        while m:
            if m & 1:
                r |= self.elem_times(a, bmask)
            m >>= 1
            a += 1
        return r


@lru_cache(maxsize=256)
def _setmul(op: CayleyTable) -> _SetMul:
    return _SetMul(op)


def _star_masks(op: CayleyTable, masks: tuple, d: int) -> tuple:
    sm = _setmul(op)
    n = op.size
    out = set()
    for a in masks:
        for b in masks:
            p = sm.times(a, b)
            if bin(p).count("1") != d:
                raise NotAPartition(f"product set of size {bin(p).count('1')}, expected {d}")
            out.add(p)
    union = 0
    for p in out:
        if union & p:
            raise NotAPartition("product sets overlap")
        union |= p
    if union != (1 << n) - 1:
        raise NotAPartition("product sets do not cover the ground set")
    return tuple(sorted(out, key=lambda m: (m & -m)))


def star_step(op: CayleyTable, P: Partition) -> Partition:
    """The family {A*B : A, B in P}, provided it is a balanced partition of the same block size."""
    if P.n != op.size:
        raise ValueError("partition and operation sizes differ")
    if not P.is_balanced:
        raise NotAPartition("partition is not balanced")
    return Partition.from_masks(P.n, _star_masks(op, P.masks, P.block_size))


@dataclass(frozen=True)
class StableIterates:
    base: Partition
    iterates: tuple
    transient: int
    period: int

    def phase(self, i: int) -> int:
        if i < self.transient:
            return i
        return self.transient + (i - self.transient) % self.period

    def iterate(self, i: int) -> Partition:
        return self.iterates[self.phase(i)]


def stable_iterates(op: CayleyTable, P: Partition) -> Optional[StableIterates]:
    """Iterate star_step until a repeat; None if any step is not a partition."""
    if P.n != op.size or not P.is_balanced:
        return None
    seq = [P]
    index = {P: 0}
    while True:
        try:
            nxt = star_step(op, seq[-1])
        except NotAPartition:
            return None
        if nxt in index:
            t = index[nxt]
            return StableIterates(P, tuple(seq), t, len(seq) - t)
        index[nxt] = len(seq)
        seq.append(nxt)


def is_stable(op: CayleyTable, P: Partition):
    """Return (is_stable, StableIterates or None)."""
    it = stable_iterates(op, P)
    return it is not None, it


@lru_cache(maxsize=256)
def enumerate_stable_partitions(op: CayleyTable, max_size: int = 16) -> tuple:
    """All stable partitions, ordered by block size then canonical blocks.

    Balanced partitions are built block by block; a partial partition is
    abandoned as soon as two completed blocks have a product of the wrong size
    or two products overlap without being equal, since either rules out a
    balanced first iterate.
    """
    n = op.size
    if n > max_size:
        raise SizeCapExceeded(f"stable partition enumeration capped at n={max_size}")
    sm = _setmul(op)
    found = []
    full = (1 << n) - 1
    for d in [d for d in range(1, n + 1) if n % d == 0]:
        def extend(blocks: list, products: set, used: int):
            if used == full:
                P = Partition.from_masks(n, blocks)
                if stable_iterates(op, P) is not None:
                    found.append(P)
                return
            first = (~used & full & -(~used & full)).bit_length() - 1
            rest = [x for x in range(first + 1, n) if not used >> x & 1]
            for others in combinations(rest, d - 1):
                c = 1 << first
                for x in others:
                    c |= 1 << x
                new = set()
                ok = True
                for a in blocks + [c]:
                    for p in (sm.times(a, c), sm.times(c, a)):
                        if bin(p).count("1") != d:
                            ok = False
                            break
                        new.add(p)
                    if not ok:
                        break
                if ok:
                    allp = products | new
                    ok = _disjoint_or_equal(new, allp)
                if ok:
                    extend(blocks + [c], allp, used | c)
        extend([], set(), 0)
    return tuple(found)


def _disjoint_or_equal(new: set, allp: set) -> bool:
    for p in new:
        for q in allp:
            if p != q and p & q:
                return False
    return True


def _absorbs(op: CayleyTable, K: StableIterates, H: StableIterates) -> bool:
    """A*B is a block of K^{(i+1)*} for A in K^{i*}, B in H^{i*}, at every i."""
    sm = _setmul(op)
    seen = set()
    i = 0
    while (K.phase(i), H.phase(i)) not in seen:
        seen.add((K.phase(i), H.phase(i)))
        nxt = set(K.iterate(i + 1).masks)
        if not all(sm.times(a, b) in nxt for a in K.iterate(i).masks for b in H.iterate(i).masks):
            return False
        i += 1
    return True


def first_residue(op: CayleyTable, H: Partition) -> Partition:
    """Finest stable refinement K of H whose iterates are absorbed by those of H.

    Absorbed means A*B is a single block of K^{(i+1)*} whenever A is a block
    of K^{i*} and B a block of H^{i*}, for every i >= 0.
    """
    hit = stable_iterates(op, H)
    if hit is None:
        raise NotAPartition(f"{H} is not stable")
    cands = []
    for K in enumerate_stable_partitions(op):
        if K.block_size > H.block_size or not K.refines(H):
            continue
        if _absorbs(op, stable_iterates(op, K), hit):
            cands.append(K)
    best = min(c.block_size for c in cands)
    top = [c for c in cands if c.block_size == best]
    if len(top) > 1:
        raise AmbiguousResidue(f"{len(top)} residue candidates of block size {best} for {H}", top)
    return top[0]


def residue_check(op: CayleyTable) -> bool:
    """True iff every stable partition is its own first residue."""
    if not is_ergodic(op):
        raise NotErgodic("residue check needs an ergodic operation")
    return all(first_residue(op, H) == H for H in enumerate_stable_partitions(op))


def _reach_profile(op: CayleyTable, it: StableIterates, x: int):
    """Run the reachable-collection recursion from {x}.

    Returns (full reach holds throughout the cycle, first step after which it always holds).
    """
    sm = _setmul(op)
    reach = frozenset([1 << x])
    seen = {}
    ok_at = []
    i = 0
    while True:
        key = (reach, it.phase(i))
        if key in seen:
            start = seen[key]
            break
        seen[key] = i
        blocks = it.iterate(i).masks
        ok_at.append(all(b in reach for b in blocks))
        reach = frozenset(sm.times(s, b) for s in reach for b in blocks)
        i += 1
        if i > MAX_DP_STEPS:
            raise BudgetExceeded("reachability recursion did not cycle")
    cycle_ok = all(ok_at[start:])
    fails = [j for j, ok in enumerate(ok_at) if not ok]
    return cycle_ok, (fails[-1] + 1 if fails else 0)


def is_strongly_ergodic(op: CayleyTable, max_size: int = MAX_DP_SIZE):
    """Decide strong ergodicity by exact-block reachability.

    Returns ``(verdict, scon_estimate)``; the estimate is None when the verdict is false.
    """
    if op.size > max_size:
        raise SizeCapExceeded(f"strong ergodicity check capped at n={max_size}")
    if not is_ergodic(op):
        return False, None
    scon = 0
    for L in enumerate_stable_partitions(op):
        it = stable_iterates(op, L)
        for x in range(op.size):
            ok, after = _reach_profile(op, it, x)
            if not ok:
                return False, None
            scon = max(scon, after)
    return True, scon
