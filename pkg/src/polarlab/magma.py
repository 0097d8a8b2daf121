"""Finite binary operations given by Cayley tables."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from math import gcd, prod
from typing import Optional, Sequence

import numpy as np

from .errors import AmbiguousResidue, NotUniformityPreserving, ParseError, SizeCapExceeded

MAX_OP_SIZE = 10
MAX_PRODUCT_SIZE = 16


@dataclass(frozen=True)
class CayleyTable:
    """Binary operation on {0..n-1}; ``table[a][b]`` is a*b."""

    table: tuple

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in row) for row in self.table)
        n = len(rows)
        if n == 0:
            raise ValueError("empty table")
        if n > MAX_PRODUCT_SIZE:
            raise SizeCapExceeded(f"table size {n} exceeds cap {MAX_PRODUCT_SIZE}")
        for row in rows:
            if len(row) != n:
                raise ValueError(f"row of length {len(row)} in table of size {n}")
            for v in row:
                if not 0 <= v < n:
                    raise ValueError(f"entry {v} outside 0..{n - 1}")
        object.__setattr__(self, "table", rows)

    @classmethod
    def from_array(cls, arr) -> "CayleyTable":
        return cls(tuple(map(tuple, np.asarray(arr, dtype=int).tolist())))

    @property
    def size(self) -> int:
        return len(self.table)

    @cached_property
    def array(self) -> np.ndarray:
        a = np.array(self.table, dtype=np.intp)
        a.setflags(write=False)
        return a

    def __call__(self, a: int, b: int) -> int:
        return self.table[a][b]

    def to_text(self) -> str:
        lines = [str(self.size)] + [" ".join(map(str, row)) for row in self.table]
        return "\n".join(lines) + "\n"


def parse_op(text: str, max_size: int = MAX_OP_SIZE) -> CayleyTable:
    """Parse the Cayley file format: ``n`` then ``n`` rows of ``n`` integers."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty operation file")
    header = lines[0].split()
    if len(header) != 1:
        raise ParseError(f"malformed header {lines[0]!r}")
    try:
        n = int(header[0])
    except ValueError:
        raise ParseError(f"malformed header {lines[0]!r}") from None
    if n < 2:
        raise ParseError(f"operation size must be at least 2, got {n}")
    if n > max_size:
        raise SizeCapExceeded(f"operation size {n} exceeds cap {max_size}")
    body = lines[1:]
    if len(body) != n:
        raise ParseError(f"expected {n} rows, found {len(body)}")
    rows = []
    for i, ln in enumerate(body):
        try:
            row = [int(t) for t in ln.split()]
        except ValueError:
            raise ParseError(f"non-integer entry in row {i}") from None
        if len(row) != n:
            raise ParseError(f"row {i} has {len(row)} entries, expected {n}")
        for v in row:
            if not 0 <= v < n:
                raise ParseError(f"entry {v} in row {i} is out of range 0..{n - 1}")
        rows.append(row)
    return CayleyTable(tuple(map(tuple, rows)))


# fixtures

def xor() -> CayleyTable:
    return CayleyTable(((0, 1), (1, 0)))


def add_mod(q: int) -> CayleyTable:
    return CayleyTable.from_array(np.add.outer(np.arange(q), np.arange(q)) % q)


def sub_mod(q: int) -> CayleyTable:
    return CayleyTable.from_array(np.subtract.outer(np.arange(q), np.arange(q)) % q)


def projection(n: int = 2) -> CayleyTable:
    """a*b = a."""
    return CayleyTable.from_array(np.repeat(np.arange(n)[:, None], n, axis=1))


def constant(n: int = 2, value: int = 0) -> CayleyTable:
    return CayleyTable.from_array(np.full((n, n), value))


def shift(n: int = 2) -> CayleyTable:
    """a*b = a+1 mod n, ignoring b."""
    return CayleyTable.from_array(np.repeat(((np.arange(n) + 1) % n)[:, None], n, axis=1))


# Uniformity preserving, not a quasigroup, and row 0 is constant so every
# pair of columns is collapsed by some left factor.
ZERO_EXPONENT_TABLE = CayleyTable(((3, 3, 3, 3), (0, 1, 0, 0), (1, 0, 1, 1), (2, 2, 2, 2)))


def random_up_op(rng: np.random.Generator, n: int) -> CayleyTable:
    """Random uniformity-preserving table: every column an independent permutation."""
    cols = [rng.permutation(n) for _ in range(n)]
    return CayleyTable.from_array(np.stack(cols, axis=1))


# predicates

def _is_perm(v) -> bool:
    return len(set(v)) == len(v)


def is_uniformity_preserving(op: CayleyTable) -> bool:
    return all(_is_perm(op.array[:, b]) for b in range(op.size))


def is_quasigroup(op: CayleyTable) -> bool:
    return is_uniformity_preserving(op) and all(_is_perm(row) for row in op.table)


def inverse_op(op: CayleyTable) -> CayleyTable:
    """The right division x /* b: the unique a with a*b = x."""
    n = op.size
    inv = np.empty((n, n), dtype=int)
    for b in range(n):
        col = op.array[:, b]
        if not _is_perm(col):
            raise NotUniformityPreserving(f"column {b} is not a bijection")
        inv[col, b] = np.arange(n)
    return CayleyTable.from_array(inv)


def product_op(ops: Sequence[CayleyTable], max_size: int = MAX_PRODUCT_SIZE) -> CayleyTable:
    """Componentwise product with mixed-radix encoding, first factor most significant."""
    if not ops:
        raise ValueError("empty operation list")
    sizes = [o.size for o in ops]
    total = prod(sizes)
    if total > max_size:
        raise SizeCapExceeded(f"product size {total} exceeds cap {max_size}")
    digits = np.array(np.unravel_index(np.arange(total), sizes))  # (m, total)
    parts = [o.array[np.ix_(d, d)] for o, d in zip(ops, digits)]
    return CayleyTable.from_array(np.ravel_multi_index(parts, sizes))


def zero_exponent_predicate(op: CayleyTable) -> bool:
    """Every pair of columns agrees on at least one row."""
    a = op.array
    n = op.size
    for b in range(n):
        for c in range(b + 1, n):
            if not np.any(a[:, b] == a[:, c]):
                return False
    return True


# graph structure of right multiplication

def _successors(op: CayleyTable) -> list:
    return [sorted(set(row)) for row in op.table]


def _reach(succ, start: int) -> set:
    seen = {start}
    todo = [start]
    while todo:
        x = todo.pop()
        for y in succ[x]:
            if y not in seen:
                seen.add(y)
                todo.append(y)
    return seen


def invariant_set(op: CayleyTable) -> Optional[frozenset]:
    """A proper non-empty A with A*X = A, or None if the operation is irreducible."""
    n = op.size
    full = set(range(n))
    for x in range(n):
        closed = _reach(_successors(op), x)
        if closed != full:
            # shrink the closed set until it is exactly invariant
            a = closed
            while True:
                nxt = {op.table[u][b] for u in a for b in range(n)}
                if nxt == a:
                    return frozenset(a)
                a = nxt
    return None


def is_irreducible(op: CayleyTable) -> bool:
    return invariant_set(op) is None


def cyclic_classes(op: CayleyTable) -> Optional[list]:
    """Period classes H_0..H_{r-1} with H_i*X = H_{i+1 mod r} for an irreducible op.

    Returns None when the operation is reducible; a single class means aperiodic.
    """
    if not is_irreducible(op):
        return None
    succ = _successors(op)
    level = {0: 0}
    queue = deque([0])
    period = 0
    while queue:
        x = queue.popleft()
        for y in succ[x]:
            if y not in level:
                level[y] = level[x] + 1
                queue.append(y)
            else:
                period = gcd(period, level[x] + 1 - level[y])
    period = abs(period) or 1
    classes = [[] for _ in range(period)]
    for x in range(op.size):
        classes[level[x] % period].append(x)
    return [tuple(c) for c in classes]


def is_ergodic(op: CayleyTable) -> bool:
    classes = cyclic_classes(op)
    return classes is not None and len(classes) == 1


@dataclass(frozen=True)
class OpClassification:
    uniformity_preserving: bool
    irreducible: bool
    ergodic: bool
    quasigroup: bool
    inverse_strongly_ergodic: bool
    polarizing: bool
    zero_exponent_condition: bool
    scon_estimate: Optional[int] = None
    invariant_set: Optional[tuple] = None
    cyclic_partition: Optional[tuple] = None
    inverse_stable_partitions: tuple = field(default=())
    residue_defects: tuple = field(default=())

    def summary_line(self) -> str:
        if not self.uniformity_preserving:
            head = "polarizing: no (not uniformity preserving)"
        elif not self.polarizing:
            head = "polarizing: no (inverse not strongly ergodic)"
        else:
            head = "polarizing: yes"
        return (f"{head}; zero-exponent condition: {'yes' if self.zero_exponent_condition else 'no'}"
                f"; quasigroup: {'yes' if self.quasigroup else 'no'}")


def classify(op: CayleyTable) -> OpClassification:
    """Run every predicate and collect witnesses."""
    from . import partition as part

    up = is_uniformity_preserving(op)
    inv_set = invariant_set(op)
    classes = cyclic_classes(op)
    ergodic = classes is not None and len(classes) == 1
    inv_se, scon = False, None
    stable_inv: tuple = ()
    defects: tuple = ()
    if up:
        inv = inverse_op(op)
        inv_se, scon = part.is_strongly_ergodic(inv)
        stable_inv = tuple(part.enumerate_stable_partitions(inv))
        if is_ergodic(inv):
            found = []
            for h in stable_inv:
                try:
                    k = part.first_residue(inv, h)
                except AmbiguousResidue:
                    continue
                if k != h:
                    found.append((h, k))
            defects = tuple(found)
    return OpClassification(
        uniformity_preserving=up,
        irreducible=inv_set is None,
        ergodic=ergodic,
        quasigroup=is_quasigroup(op),
        inverse_strongly_ergodic=inv_se,
        polarizing=up and inv_se,
        zero_exponent_condition=zero_exponent_predicate(op),
        scon_estimate=scon,
        invariant_set=tuple(sorted(inv_set)) if inv_set is not None else None,
        cyclic_partition=tuple(classes) if classes is not None and len(classes) > 1 else None,
        inverse_stable_partitions=stable_inv,
        residue_defects=defects,
    )


def all_tables(n: int):
    """Every operation on {0..n-1}; only sensible for tiny n."""
    if n ** (n * n) > 10 ** 6:
        raise SizeCapExceeded(f"{n ** (n * n)} tables is too many to enumerate")
    for flat in np.ndindex(*([n] * (n * n))):
        yield CayleyTable.from_array(np.array(flat).reshape(n, n))


def all_up_tables(n: int):
    """Every uniformity-preserving operation on {0..n-1}."""
    from itertools import permutations, product

    perms = list(permutations(range(n)))
    for cols in product(perms, repeat=n):
        yield CayleyTable.from_array(np.array(cols).T)

