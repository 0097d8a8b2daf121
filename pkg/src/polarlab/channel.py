"""Discrete memoryless channels with uniform input."""
from __future__ import annotations

from dataclasses import dataclass
from math import log2
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InputSizeMismatch, InputTooSmall, ParseError, PartitionMismatch
from .magma import CayleyTable
from .partition import Partition, balanced_partitions, first_residue, stable_iterates

ROW_TOL = 1e-9
MERGE_TOL = 1e-12
EQUIV_TOL = 1e-9


class Channel:
    """Row-stochastic likelihood matrix; ``probs[x, y]`` is W(y|x)."""

    __slots__ = ("probs", "labels")

    def __init__(self, probs, labels: Optional[Sequence] = None, validate: bool = True):
        p = np.array(probs, dtype=float)
        if p.ndim != 2 or p.shape[0] == 0 or p.shape[1] == 0:
            raise ValueError(f"likelihood matrix must be 2-d and non-empty, got shape {p.shape}")
        if validate:
            if np.any(p < 0) or np.any(p > 1 + ROW_TOL) or not np.all(np.isfinite(p)):
                raise ValueError("probabilities must lie in [0, 1]")
            sums = p.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1) > ROW_TOL)
            if bad.size:
                raise ValueError(f"row {bad[0]} sums to {float(sums[bad[0]]):.12g}, not 1")
        p.setflags(write=False)
        self.probs = p
        self.labels = tuple(labels) if labels is not None else None

    @property
    def input_size(self) -> int:
        return self.probs.shape[0]

    @property
    def output_size(self) -> int:
        return self.probs.shape[1]

    def __repr__(self):
        return f"Channel({self.input_size} inputs, {self.output_size} outputs)"

    def canonical(self, tol: float = MERGE_TOL) -> "Channel":
        """Equivalent channel with merged outputs in canonical order."""
        return Channel(_merge_columns(self.probs, tol), validate=False)

    def to_text(self) -> str:
        lines = [f"{self.input_size} {self.output_size}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.probs]
        return "\n".join(lines) + "\n"


def parse_channel(text: str) -> Channel:
    """Parse ``|X| |Y|`` followed by one row of probabilities per input."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty channel file")
    try:
        nx, ny = (int(t) for t in lines[0].split())
    except ValueError:
        raise ParseError(f"malformed header {lines[0]!r}") from None
    if nx < 1 or ny < 1:
        raise ParseError("alphabet sizes must be positive")
    if len(lines) - 1 != nx:
        raise ParseError(f"expected {nx} rows, found {len(lines) - 1}")
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
        return Channel(rows)
    except ValueError as e:
        raise ParseError(str(e)) from None


# information measures

def mutual_info(W: Channel) -> float:
    """Symmetric capacity in bits."""
    p = W.probs
    q = p.mean(axis=0)
    mask = p > 0
    ratio = np.ones_like(p)
    np.divide(p, np.broadcast_to(q, p.shape), out=ratio, where=mask)
    val = float(np.sum(p[mask] * np.log2(ratio[mask])) / W.input_size)
    return min(max(val, 0.0), log2(W.input_size))


def prob_error(W: Channel) -> float:
    """ML error probability under uniform input."""
    return float(max(0.0, 1.0 - W.probs.max(axis=0).sum() / W.input_size))


def bhattacharyya_pair(W: Channel, x: int, x2: int) -> float:
    return float(np.sqrt(W.probs[x] * W.probs[x2]).sum())


def bhattacharyya_matrix(W: Channel) -> np.ndarray:
    s = np.sqrt(W.probs)
    return s @ s.T


def bhattacharyya(W: Channel):
    """Return (Z, Z_min, Z_max) over distinct input pairs."""
    n = W.input_size
    if n < 2:
        raise InputTooSmall("Bhattacharyya parameters need at least two inputs")
    z = bhattacharyya_matrix(W)
    off = z[~np.eye(n, dtype=bool)]
    return float(off.mean()), float(off.min()), float(off.max())


def project_channel(W: Channel, H: Partition) -> Channel:
    """Channel from blocks of H, each block mixing its inputs uniformly."""
    if H.n != W.input_size or not H.is_balanced:
        raise PartitionMismatch(f"need a balanced partition of {W.input_size} inputs, got {H}")
    rows = np.stack([W.probs[list(b)].mean(axis=0) for b in H.blocks])
    return Channel(rows, validate=False)


# canonical forms

def _weights(n: int) -> np.ndarray:
    # fixed, rationally independent weights for a one-dimensional sort key
    return np.sqrt(np.arange(2, n + 2, dtype=float)) + 0.5


def _close_rows(a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    return np.all(np.abs(a - b) <= tol * np.maximum(np.abs(a), np.abs(b)), axis=-1)


def _merge_columns(probs: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    """Drop null outputs, merge outputs with matching posteriors, sort canonically."""
    mass = probs.sum(axis=0)
    p = probs[:, mass > 0]
    n = p.shape[0]
    w = _weights(n)
    while True:
        post = (p / p.sum(axis=0)).T
        order = np.argsort(post @ w, kind="stable")
        sp = post[order]
        close = _close_rows(sp[1:], sp[:-1], tol)
        if not close.any():
            break
        starts = np.flatnonzero(np.concatenate([[True], ~close]))
        p = np.add.reduceat(p[:, order], starts, axis=1)
    mass = p.sum(axis=0)
    post = p / mass
    order = np.lexsort((mass,) + tuple(post[k] for k in reversed(range(n))))
    return p[:, order]


@dataclass(frozen=True)
class CanonicalForm:
    """Output masses and posteriors, one entry per distinct posterior."""

    masses: np.ndarray
    posteriors: np.ndarray
    tol: float

    def __len__(self):
        return len(self.masses)

    def to_channel(self) -> Channel:
        n = self.posteriors.shape[1]
        return Channel((self.posteriors * self.masses[:, None] * n).T, validate=False)


def canonicalize(W: Channel, tol: float = MERGE_TOL) -> CanonicalForm:
    p = _merge_columns(W.probs, tol)
    m = p.sum(axis=0)
    return CanonicalForm(m / W.input_size, (p / m).T, tol)


def forms_equal(f1: CanonicalForm, f2: CanonicalForm, tol: float = EQUIV_TOL) -> bool:
    """Compare forms entrywise; outputs lighter than ``tol`` count as absent."""
    if f1.posteriors.shape[1] != f2.posteriors.shape[1]:
        return False
    keep1, keep2 = f1.masses > tol, f2.masses > tol
    if tol == 0:
        keep1, keep2 = slice(None), slice(None)
    m1, p1 = f1.masses[keep1], f1.posteriors[keep1]
    m2, p2 = f2.masses[keep2], f2.posteriors[keep2]
    if len(m1) != len(m2):
        return False
    w = _weights(p1.shape[1])
    o1 = np.argsort(p1 @ w, kind="stable")
    o2 = np.argsort(p2 @ w, kind="stable")
    return (np.allclose(p1[o1], p2[o2], rtol=0, atol=tol)
            and np.allclose(m1[o1], m2[o2], rtol=0, atol=tol))


def equivalent(W1: Channel, W2: Channel, tol: float = EQUIV_TOL) -> bool:
    """Equal canonical forms, up to ``tol`` on masses and posterior entries."""
    if W1.input_size != W2.input_size:
        raise InputSizeMismatch(f"input sizes {W1.input_size} and {W2.input_size}")
    return forms_equal(canonicalize(W1), canonicalize(W2), tol)


def partition_affinity(W: Channel, H: Partition, gamma: float) -> float:
    """Output mass whose posterior is within ``gamma`` (sup norm) of uniform on some block."""
    if H.n != W.input_size:
        raise PartitionMismatch("partition and channel sizes differ")
    mass = W.probs.sum(axis=0)
    keep = mass > 0
    post = (W.probs[:, keep] / mass[keep]).T
    hit = np.zeros(post.shape[0], dtype=bool)
    for i in range(H.num_blocks):
        hit |= np.max(np.abs(post - H.uniform_on_block(i)), axis=1) < gamma
    return float(mass[keep][hit].sum() / W.input_size)


# easiness certificates

CERTIFIED, RULED_OUT, UNKNOWN = "Certified", "RuledOut", "Unknown"


@dataclass(frozen=True)
class EasinessCertificate:
    verdict: str
    L: int
    partition: Optional[Partition]
    gap_capacity: float
    gap_projected: Optional[float]
    pe_projected: Optional[float]
    delta: float
    epsilon: Optional[float] = None

    @property
    def pe_ok(self) -> Optional[bool]:
        if self.epsilon is None or self.pe_projected is None:
            return None
        return self.pe_projected < self.epsilon

    def to_dict(self) -> dict:
        d = {
            "verdict": self.verdict,
            "L": self.L,
            "partition": str(self.partition) if self.partition is not None else None,
            "gap_capacity": self.gap_capacity,
            "gap_projected": self.gap_projected,
            "pe_projected": self.pe_projected,
        }
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
            d["pe_below_epsilon"] = self.pe_ok
        return d


def _nearest_log_gap(info: float, n: int):
    gaps = [(abs(info - log2(L)), L) for L in range(1, n + 1)]
    return min(gaps)


def easiness_check(W: Channel, delta: float, epsilon: Optional[float] = None,
                   restrict_to: Optional[Iterable[Partition]] = None) -> EasinessCertificate:
    """Three-way verdict on delta-easiness.

    Certified: some balanced partition H (from ``restrict_to`` if given) has both
    |I(W) - log|H|| and |I(W[H]) - log|H|| below ``delta``; the witness with the
    smallest larger gap is reported.
    RuledOut: no integer L <= |X| has |I(W) - log L| < delta.
    Unknown: neither.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    n = W.input_size
    info = mutual_info(W)
    cands = restrict_to if restrict_to is not None else balanced_partitions(n)
    best = None
    for H in cands:
        L = H.num_blocks
        gc = abs(info - log2(L))
        if best is not None and gc >= best[0]:
            continue
        proj = project_channel(W, H)
        gp = abs(mutual_info(proj) - log2(L))
        score = max(gc, gp)
        if best is None or score < best[0]:
            best = (score, H, gc, gp, proj)
    if best is not None and best[0] < delta:
        _, H, gc, gp, proj = best
        return EasinessCertificate(CERTIFIED, H.num_blocks, H, gc, gp, prob_error(proj), delta, epsilon)
    gap, L = _nearest_log_gap(info, n)
    if gap >= delta:
        return EasinessCertificate(RULED_OUT, L, None, gap, None, None, delta, epsilon)
    if best is None:
        return EasinessCertificate(UNKNOWN, L, None, gap, None, None, delta, epsilon)
    _, H, gc, gp, proj = best
    return EasinessCertificate(UNKNOWN, H.num_blocks, H, gc, gp, prob_error(proj), delta, epsilon)


# fixtures

def perfect(n: int) -> Channel:
    return Channel(np.eye(n))


def useless(n: int, m_outputs: int = 1) -> Channel:
    return Channel(np.full((n, m_outputs), 1.0 / m_outputs))


def bec(p: float) -> Channel:
    """Binary erasure channel; outputs 0, 1, erasure."""
    return Channel([[1 - p, 0.0, p], [0.0, 1 - p, p]])


def bsc(q: float) -> Channel:
    return Channel([[1 - q, q], [q, 1 - q]])


def random_channel(seed: int, n: int, m: int) -> Channel:
    rng = np.random.default_rng(seed)
    return Channel(rng.dirichlet(np.ones(m), size=n))


def _class_labels(classes: Sequence[Sequence[int]]) -> np.ndarray:
    flat = sorted(x for c in classes for x in c)
    n = len(flat)
    if flat != list(range(n)) or any(len(c) == 0 for c in classes):
        raise ValueError("classes must be non-empty and partition 0..n-1")
    lab = np.empty(n, dtype=int)
    for i, c in enumerate(classes):
        lab[list(c)] = i
    return lab


def absorbing_channel(a1: Sequence[int], a2: Sequence[int], eps: float) -> Channel:
    """Outputs (1, 2, e): the label of the class containing x w.p. 1-eps, else e."""
    lab = _class_labels([a1, a2])
    p = np.zeros((len(lab), 3))
    p[np.arange(len(lab)), lab] = 1 - eps
    p[:, 2] = eps
    return Channel(p, labels=("1", "2", "e"))


def cyclic_channel(classes: Sequence[Sequence[int]], i: int, eps: float) -> Channel:
    """Outputs (0..r-1, e): label y w.p. 1-eps when x is in class (y+i) mod r."""
    if len({len(c) for c in classes}) != 1:
        raise ValueError("cyclic classes must have equal sizes")
    lab = _class_labels(classes)
    r = len(classes)
    p = np.zeros((len(lab), r + 1))
    p[np.arange(len(lab)), (lab - i) % r] = 1 - eps
    p[:, r] = eps
    return Channel(p, labels=tuple(map(str, range(r))) + ("e",))


def residue_channel(op: CayleyTable, H: Partition, i: int, eps: float) -> Channel:
    """Reveal the block of the i-th residue iterate w.p. 1-eps, else the block of H's i-th iterate.

    ``op`` is the operation H is stable under; the matching transforms use its
    inverse operation.
    """
    hit = stable_iterates(op, H)
    if hit is None:
        raise ValueError(f"{H} is not stable under the operation")
    kit = stable_iterates(op, first_residue(op, H))
    fine, coarse = kit.iterate(i), hit.iterate(i)
    cols = [(1 - eps) * np.isin(np.arange(op.size), b) for b in fine.blocks]
    cols += [eps * np.isin(np.arange(op.size), b) for b in coarse.blocks]
    labels = [f"K:{','.join(map(str, b))}" for b in fine.blocks]
    labels += [f"H:{','.join(map(str, b))}" for b in coarse.blocks]
    return Channel(np.array(cols, dtype=float).T, labels=labels)
