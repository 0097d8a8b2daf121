"""Multiple-access channels and their reduction to single-user channels over product alphabets."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import log2, prod
from typing import Optional, Sequence

import numpy as np

from .channel import (CERTIFIED, RULED_OUT, UNKNOWN, Channel, _merge_columns, easiness_check,
                      equivalent, mutual_info, prob_error, project_channel)
from .errors import FactorizationFailed, ParseError, SizeCapExceeded, SizeMismatch
from .magma import (MAX_PRODUCT_SIZE, CayleyTable, inverse_op, is_uniformity_preserving,
                    product_op)
from .partition import Partition, balanced_partitions, enumerate_stable_partitions
from .polar import PolarRun, polarization_run, transform_seq

MAX_USERS = 3


class Mac:
    """m-user channel; row index of ``probs`` is the mixed-radix joint input, user 1 most significant."""

    __slots__ = ("user_sizes", "channel")

    def __init__(self, user_sizes: Sequence[int], probs, validate: bool = True):
        sizes = tuple(int(s) for s in user_sizes)
        if not 1 <= len(sizes) <= MAX_USERS:
            raise SizeCapExceeded(f"between 1 and {MAX_USERS} users supported, got {len(sizes)}")
        if any(s < 1 for s in sizes):
            raise ValueError("user alphabet sizes must be positive")
        if prod(sizes) > MAX_PRODUCT_SIZE:
            raise SizeCapExceeded(f"product alphabet {prod(sizes)} exceeds cap {MAX_PRODUCT_SIZE}")
        ch = probs if isinstance(probs, Channel) else Channel(probs, validate=validate)
        if ch.input_size != prod(sizes):
            raise SizeMismatch(f"{ch.input_size} likelihood rows for product alphabet {prod(sizes)}")
        self.user_sizes = sizes
        self.channel = ch

    @property
    def probs(self) -> np.ndarray:
        return self.channel.probs

    @property
    def users(self) -> int:
        return len(self.user_sizes)

    def __repr__(self):
        return f"Mac(users={self.user_sizes}, outputs={self.channel.output_size})"

    def to_text(self) -> str:
        head = f"{self.users} " + " ".join(map(str, self.user_sizes)) + f" {self.channel.output_size}"
        rows = [" ".join(repr(float(v)) for v in r) for r in self.probs]
        return "\n".join([head] + rows) + "\n"


def parse_mac(text: str) -> Mac:
    """Parse ``m |X_1| .. |X_m| |Y|`` followed by one row per joint input."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty MAC file")
    try:
        head = [int(t) for t in lines[0].split()]
    except ValueError:
        raise ParseError(f"malformed header {lines[0]!r}") from None
    if len(head) < 3 or len(head) != head[0] + 2:
        raise ParseError(f"malformed header {lines[0]!r}")
    sizes, ny = head[1:-1], head[-1]
    if head[0] > MAX_USERS or prod(sizes) > MAX_PRODUCT_SIZE:
        raise SizeCapExceeded(f"MAC with sizes {sizes} exceeds desk-scale caps")
    if len(lines) - 1 != prod(sizes):
        raise ParseError(f"expected {prod(sizes)} rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:]):
        try:
            row = [float(t) for t in ln.split()]
        except ValueError:
            raise ParseError(f"non-numeric entry in row {i}") from None
        if len(row) != ny:
            raise ParseError(f"row {i} has {len(row)} entries, expected {ny}")
        rows.append(row)
    try:
        return Mac(sizes, rows)
    except ValueError as e:
        raise ParseError(str(e)) from None


def to_single_user(mac: Mac) -> Channel:
    return mac.channel


def sum_capacity(mac: Mac) -> float:
    return mutual_info(mac.channel)


def _check_ops(mac: Mac, ops: Sequence[CayleyTable]):
    if tuple(o.size for o in ops) != mac.user_sizes:
        raise SizeMismatch(f"operation sizes {[o.size for o in ops]} do not match users {mac.user_sizes}")


def mac_transform(mac: Mac, ops: Sequence[CayleyTable], sign: str) -> Mac:
    """Apply one MAC transform user by user, without going through the product operation.

    minus: W-(y1, y2 | u1) = 1/N sum_{u2} W(y1 | u1 * u2) W(y2 | u2), with * acting per user;
    plus:  W+(y1, y2, u1 | u2) = 1/N W(y1 | u1 * u2) W(y2 | u2).  N is the joint alphabet size.
    """
    _check_ops(mac, ops)
    tuples = list(product(*(range(s) for s in mac.user_sizes)))
    index = {t: i for i, t in enumerate(tuples)}
    n = len(tuples)
    p = mac.probs
    m = p.shape[1]

    def combine(u1, u2):
        return index[tuple(o(a, b) for o, a, b in zip(ops, u1, u2))]

    if sign == "-":
        out = np.zeros((n, m * m))
        for u1 in tuples:
            row = np.zeros((m, m))
            for u2 in tuples:
                row += np.outer(p[combine(u1, u2)], p[index[u2]])
            out[index[u1]] = row.ravel() / n
    elif sign == "+":
        out = np.zeros((n, n * m * m))
        for u2 in tuples:
            blocks = [np.outer(p[combine(u1, u2)], p[index[u2]]).ravel() / n for u1 in tuples]
            out[index[u2]] = np.concatenate(blocks)
    else:
        raise ValueError(f"unknown sign {sign!r}")
    return Mac(mac.user_sizes, Channel(_merge_columns(out), validate=False))


def mac_transform_seq(mac: Mac, ops: Sequence[CayleyTable], s: str) -> Mac:
    for sign in s:
        mac = mac_transform(mac, ops, sign)
    return mac


def reduction_consistent(mac: Mac, ops: Sequence[CayleyTable], depth: int = 2,
                         tol: float = 1e-12) -> bool:
    """Direct MAC transforms agree with single-user transforms under the product operation."""
    pop = product_op(ops)
    for d in range(depth + 1):
        for signs in product("-+", repeat=d):
            s = "".join(signs)
            direct = mac_transform_seq(mac, ops, s).channel
            reduced = transform_seq(mac.channel, pop, s)
            if not equivalent(direct, reduced, tol):
                return False
    return True


# factorization of product partitions

def _sections(P: Partition):
    return product(*P.blocks)


def _check_sections(H: Partition, user_sizes: Sequence[int], parts: Sequence[Partition]) -> bool:
    lab = H.labels()
    for choice in product(*(_sections(P) for P in parts)):
        hits = np.zeros(H.num_blocks, dtype=int)
        for t in product(*choice):
            hits[lab[np.ravel_multi_index(t, user_sizes)]] += 1
        if not np.all(hits == 1):
            return False
    return True


def canonical_factorization(H: Partition, user_sizes: Sequence[int]) -> list:
    """Split H into per-user partitions given by the coordinate projections of its blocks.

    Checks (a) each projection family is a balanced partition, (b) |H| is the
    product of the per-user block counts, (c) every product of per-user
    sections meets each block of H exactly once.
    """
    sizes = tuple(user_sizes)
    if H.n != prod(sizes):
        raise SizeMismatch("partition does not live on the product alphabet")
    parts = []
    for i, size in enumerate(sizes):
        projs = set()
        for b in H.blocks:
            coords = np.unravel_index(np.array(b), sizes)[i]
            projs.add(frozenset(int(c) for c in coords))
        blocks = list(projs)
        flat = sorted(x for blk in blocks for x in blk)
        if flat != list(range(size)) or len({len(blk) for blk in blocks}) != 1:
            raise FactorizationFailed(f"projection on user {i + 1} is not a balanced partition", check="a")
        parts.append(Partition(size, tuple(tuple(sorted(blk)) for blk in blocks)))
    if H.num_blocks != prod(p.num_blocks for p in parts):
        raise FactorizationFailed(
            f"|H| = {H.num_blocks} but per-user counts multiply to {prod(p.num_blocks for p in parts)}",
            check="b")
    if not _check_sections(H, sizes, parts):
        raise FactorizationFailed("a product of per-user sections misses or repeats a block", check="c")
    return parts


def find_section_factorization(H: Partition, user_sizes: Sequence[int]) -> Optional[list]:
    """Search all per-user balanced partitions for one passing checks (b) and (c)."""
    sizes = tuple(user_sizes)
    options = [list(balanced_partitions(s)) for s in sizes]
    for parts in product(*options):
        if prod(p.num_blocks for p in parts) != H.num_blocks:
            continue
        if _check_sections(H, sizes, parts):
            return list(parts)
    return None


@dataclass(frozen=True)
class MacEasinessCertificate:
    verdict: str
    L: int
    L_users: tuple
    partition: Optional[Partition]
    factorization: tuple
    gap_capacity: float
    gap_projected: Optional[float]
    pe_projected: Optional[float]
    delta: float
    epsilon: Optional[float] = None
    diagnostics: tuple = field(default=())

    @property
    def pe_ok(self) -> Optional[bool]:
        if self.epsilon is None or self.pe_projected is None:
            return None
        return self.pe_projected < self.epsilon

    def to_dict(self) -> dict:
        d = {
            "verdict": self.verdict,
            "L": self.L,
            "L_users": list(self.L_users),
            "partition": str(self.partition) if self.partition is not None else None,
            "factorization": [str(p) for p in self.factorization],
            "gap_capacity": self.gap_capacity,
            "gap_projected": self.gap_projected,
            "pe_projected": self.pe_projected,
            "diagnostics": list(self.diagnostics),
        }
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
            d["pe_below_epsilon"] = self.pe_ok
        return d


def product_stable_partitions(ops: Sequence[CayleyTable]) -> tuple:
    """Stable partitions of the joint alphabet under the inverse of the product operation."""
    return enumerate_stable_partitions(inverse_op(product_op(ops)))


def _factorize(H: Partition, sizes):
    try:
        return canonical_factorization(H, sizes), None
    except FactorizationFailed as e:
        parts = find_section_factorization(H, sizes)
        note = f"{H}: projection factorization failed ({e.check}: {e})"
        if parts is None:
            return None, note + "; no section factorization exists"
        return parts, note + "; used section factorization " + " x ".join(map(str, parts))


def mac_easiness_check(mac: Mac, ops: Sequence[CayleyTable], delta: float,
                       epsilon: Optional[float] = None) -> MacEasinessCertificate:
    """Certificate over stable partitions of the product inverse operation that factor per user."""
    _check_ops(mac, ops)
    if not all(is_uniformity_preserving(o) for o in ops):
        raise ValueError("MAC easiness check needs uniformity-preserving operations")
    W = mac.channel
    info = mutual_info(W)
    best = None
    notes = []
    for H in product_stable_partitions(ops):
        L = H.num_blocks
        gc = abs(info - log2(L))
        proj = project_channel(W, H)
        gp = abs(mutual_info(proj) - log2(L))
        score = max(gc, gp)
        if best is not None and score >= best[0]:
            continue
        parts, note = _factorize(H, mac.user_sizes)
        if note and score < delta:
            notes.append(note)
        if parts is None:
            continue
        best = (score, H, parts, gc, gp, proj)
    if best is not None and best[0] < delta:
        _, H, parts, gc, gp, proj = best
        return MacEasinessCertificate(CERTIFIED, H.num_blocks, tuple(p.num_blocks for p in parts), H,
                                      tuple(parts), gc, gp, prob_error(proj), delta, epsilon, tuple(notes))
    achievable = sorted({prod(ls) for ls in product(*(range(1, s + 1) for s in mac.user_sizes))})
    gap, L = min((abs(info - log2(L)), L) for L in achievable)
    if gap >= delta:
        return MacEasinessCertificate(RULED_OUT, L, (), None, (), gap, None, None, delta, epsilon,
                                      tuple(notes))
    if best is None:
        return MacEasinessCertificate(UNKNOWN, L, (), None, (), gap, None, None, delta, epsilon,
                                      tuple(notes))
    _, H, parts, gc, gp, proj = best
    return MacEasinessCertificate(UNKNOWN, H.num_blocks, tuple(p.num_blocks for p in parts), H,
                                  tuple(parts), gc, gp, prob_error(proj), delta, epsilon, tuple(notes))


def product_channel_check(mac: Mac, ops: Sequence[CayleyTable], delta: float,
                          epsilon: Optional[float] = None):
    """Single-user certificate of the reduced channel over the same stable partitions."""
    return easiness_check(mac.channel, delta, epsilon, restrict_to=product_stable_partitions(ops))


def mac_polarization_run(mac: Mac, ops: Sequence[CayleyTable], depth: int, mode: str = "exhaustive",
                         samples: int = 1000, seed: Optional[int] = None, delta: float = 0.05,
                         epsilon: Optional[float] = None, threads: int = 1, **kw) -> PolarRun:
    """Run the single-user process on the reduced channel, certifying leaves as MACs."""
    _check_ops(mac, ops)
    sizes = mac.user_sizes

    def certify(leaf: Channel):
        return mac_easiness_check(Mac(sizes, leaf), ops, delta, epsilon)

    run = polarization_run(mac.channel, product_op(ops), depth, mode, samples, seed, delta, epsilon,
                           threads, certify=certify, **kw)
    run.summary["mean_sum_rate"] = run.summary["mean_I"]
    run.summary["user_sizes"] = list(sizes)
    return run


# fixtures

def perfect_mac(user_sizes: Sequence[int]) -> Mac:
    n = prod(user_sizes)
    return Mac(user_sizes, np.eye(n))


def useless_mac(user_sizes: Sequence[int], m_outputs: int = 1) -> Mac:
    return Mac(user_sizes, np.full((prod(user_sizes), m_outputs), 1.0 / m_outputs))


def adder_mac() -> Mac:
    """Two binary users, output x1 + x2 in {0, 1, 2}."""
    rows = np.zeros((4, 3))
    for x1, x2 in product(range(2), repeat=2):
        rows[2 * x1 + x2, x1 + x2] = 1.0
    return Mac((2, 2), rows)


def random_mac(seed: int, user_sizes: Sequence[int], m: int) -> Mac:
    rng = np.random.default_rng(seed)
    return Mac(user_sizes, rng.dirichlet(np.ones(m), size=prod(user_sizes)))


def single_user_component_mac(W: Channel, user_sizes: Sequence[int], user: int) -> Mac:
    """MAC whose output depends on one user's input only, through W."""
    sizes = tuple(user_sizes)
    if W.input_size != sizes[user]:
        raise SizeMismatch("channel input does not match the chosen user's alphabet")
    digits = np.unravel_index(np.arange(prod(sizes)), sizes)[user]
    return Mac(sizes, W.probs[digits])
