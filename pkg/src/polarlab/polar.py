"""Minus/plus channel transforms under a binary operation and the polarization process."""
from __future__ import annotations

import csv
import io
import json
from itertools import product
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import log2
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import (Channel, _merge_columns, bhattacharyya,
                      bhattacharyya_matrix, easiness_check, mutual_info, project_channel)
from .errors import BudgetExceeded, LengthNotPowerOfTwo, NotUniformityPreserving, SizeMismatch
from .magma import CayleyTable, inverse_op, is_uniformity_preserving
from .partition import (Partition, balanced_partitions, enumerate_stable_partitions, meet,
                        singletons)

MAX_OUTPUTS = 20_000
MAX_RAW_OUTPUTS = 50_000_000
CHUNK_ENTRIES = 4_000_000
HIST_WIDTH = 0.05
TOL = 1e-9


@dataclass(frozen=True)
class SignSequence:
    """A word over {'-', '+'}, applied left to right."""

    signs: str = ""

    def __post_init__(self):
        if set(self.signs) - {"-", "+"}:
            raise ValueError(f"sign sequence {self.signs!r} may only contain '-' and '+'")

    @property
    def minus_count(self) -> int:
        return self.signs.count("-")

    @property
    def plus_count(self) -> int:
        return self.signs.count("+")

    def __len__(self):
        return len(self.signs)

    def __str__(self):
        return self.signs


def _signs(s) -> str:
    return str(SignSequence(str(s)))


def sign_key(s: str):
    """Canonical ordering of sequences: by length, then minus before plus."""
    return len(s), s.replace("-", "0").replace("+", "1")


def all_sequences(depth: int):
    return ["".join(t) for t in product("-+", repeat=depth)]


# transforms

def _check(W: Channel, op: CayleyTable):
    if op.size != W.input_size:
        raise SizeMismatch(f"operation of size {op.size} on channel with {W.input_size} inputs")


class _Accumulator:
    """Merge transform output in chunks, failing early once the budget is certainly exceeded."""

    def __init__(self, max_outputs: int):
        self.max_outputs = max_outputs
        self.parts = []
        self.pending = 0

    def add(self, part: np.ndarray):
        part = _merge_columns(part)
        self.parts.append(part)
        self.pending += part.shape[1]
        if self.pending > 2 * self.max_outputs + 1000:
            self._collapse()

    def _collapse(self):
        merged = _merge_columns(np.concatenate(self.parts, axis=1))
        # merging more columns never lowers the number of distinct posteriors
        if merged.shape[1] > self.max_outputs:
            raise BudgetExceeded(f"transformed channel has more than {self.max_outputs} outputs")
        self.parts = [merged]
        self.pending = merged.shape[1]

    def result(self) -> Channel:
        if len(self.parts) > 1:
            self._collapse()
        p = self.parts[0]
        if p.shape[1] > self.max_outputs:
            raise BudgetExceeded(f"transformed channel has {p.shape[1]} outputs, cap is {self.max_outputs}")
        return Channel(p, validate=False)


def _raw_guard(raw: int):
    if raw > MAX_RAW_OUTPUTS:
        raise BudgetExceeded(f"transform would build {raw} raw outputs, cap is {MAX_RAW_OUTPUTS}")


def minus_transform(W: Channel, op: CayleyTable, max_outputs: int = MAX_OUTPUTS) -> Channel:
    """W-(y1, y2 | u1) = 1/|X| sum_u2 W(y1 | u1*u2) W(y2 | u2), canonicalized."""
    _check(W, op)
    n, m = W.probs.shape
    _raw_guard(m * m)
    shifted = W.probs[op.array]  # [u1, u2, y1]
    step = max(1, CHUNK_ENTRIES // max(1, n * m))
    acc = _Accumulator(max_outputs)
    for lo in range(0, m, step):
        part = np.einsum("aby,bz->ayz", shifted[:, :, lo:lo + step], W.probs) / n
        acc.add(part.reshape(n, -1))
    return acc.result()


def plus_transform(W: Channel, op: CayleyTable, max_outputs: int = MAX_OUTPUTS) -> Channel:
    """W+(y1, y2, u1 | u2) = 1/|X| W(y1 | u1*u2) W(y2 | u2), canonicalized."""
    _check(W, op)
    n, m = W.probs.shape
    _raw_guard(n * m * m)
    shifted = W.probs[op.array]
    step = max(1, CHUNK_ENTRIES // max(1, n * n * m))
    acc = _Accumulator(max_outputs)
    for lo in range(0, m, step):
        part = np.einsum("aby,bz->bayz", shifted[:, :, lo:lo + step], W.probs) / n
        acc.add(part.reshape(n, -1))
    return acc.result()


def transform(W: Channel, op: CayleyTable, sign: str, max_outputs: int = MAX_OUTPUTS) -> Channel:
    if sign == "-":
        return minus_transform(W, op, max_outputs)
    if sign == "+":
        return plus_transform(W, op, max_outputs)
    raise ValueError(f"unknown sign {sign!r}")


def transform_seq(W: Channel, op: CayleyTable, s, max_outputs: int = MAX_OUTPUTS) -> Channel:
    """Apply the signs of ``s`` left to right."""
    _check(W, op)
    for sign in _signs(s):
        W = transform(W, op, sign, max_outputs)
    return W


def g_combine(op: CayleyTable, xs: Sequence[int]) -> int:
    """Fold 2^k elements pairwise: g(x) = g(first half) * g(second half)."""
    k = len(xs)
    if k == 0 or k & (k - 1):
        raise LengthNotPowerOfTwo(f"length {k} is not a power of two")
    if k == 1:
        return int(xs[0])
    return op(g_combine(op, xs[:k // 2]), g_combine(op, xs[k // 2:]))


def iter_tree(W: Channel, op: CayleyTable, depth: int, prefix: str = "",
              max_outputs: int = MAX_OUTPUTS):
    """Yield (s, W^s) for every leaf under ``prefix``, each internal node computed once."""
    if len(prefix) == depth:
        yield prefix, W
        return
    for sign in "-+":
        yield from iter_tree(transform(W, op, sign, max_outputs), op, depth, prefix + sign, max_outputs)


# polarization runs

@dataclass(frozen=True)
class PolarRunRecord:
    s: str
    I: float
    Z: float
    Zmin: float
    Zmax: float
    outputs: int
    certificate: object

    def row(self) -> list:
        c = self.certificate
        return [self.s, _fmt(self.I), _fmt(self.Z), _fmt(self.Zmin), _fmt(self.Zmax), self.outputs,
                c.verdict, c.L, _fmt(c.gap_capacity), _fmt(c.gap_projected)]


CSV_COLUMNS = ["s", "I", "Z", "Zmin", "Zmax", "outputs", "verdict", "L", "gap_capacity", "gap_projected"]


def _fmt(x) -> str:
    return "" if x is None else format(float(x), ".17g")


@dataclass
class PolarRun:
    records: list
    summary: dict
    partial: bool = False
    error: Optional[str] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(r.row())
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True)


def make_record(s: str, leaf: Channel, certify: Callable) -> PolarRunRecord:
    if leaf.input_size >= 2:
        z, zmin, zmax = bhattacharyya(leaf)
    else:
        z = zmin = zmax = 0.0
    return PolarRunRecord(s, mutual_info(leaf), z, zmin, zmax, leaf.output_size, certify(leaf))


def histogram(values, top: float, width: float = HIST_WIDTH) -> list:
    nbins = max(1, int(np.ceil(top / width - 1e-12)))
    counts = np.zeros(nbins, dtype=int)
    for v in values:
        counts[min(nbins - 1, max(0, int(v / width)))] += 1
    return [{"lo": round(i * width, 12), "hi": round(min(top, (i + 1) * width), 12), "count": int(c)}
            for i, c in enumerate(counts)]


def _summarize(W: Channel, records: list, mode: str, depth: int, extra: dict) -> dict:
    vals = [r.I for r in records]
    info = mutual_info(W)
    out = {
        "mode": mode,
        "depth": depth,
        "I(W)": info,
        "leaves": len(records),
        "mean_I": float(np.mean(vals)) if vals else None,
        "fraction_certified": (sum(r.certificate.verdict == "Certified" for r in records) / len(records)
                               if records else None),
        "histogram": histogram(vals, log2(W.input_size)),
    }
    if mode == "exhaustive" and vals and len(vals) == 2 ** depth:
        out["conservation_error"] = abs(out["mean_I"] - info)
    out.update(extra)
    return out


def default_certifier(n: int, delta: float, epsilon: Optional[float] = None,
                      restrict_to: Optional[list] = None) -> Callable:
    cands = list(restrict_to) if restrict_to is not None else list(balanced_partitions(n))
    return lambda leaf: easiness_check(leaf, delta, epsilon, restrict_to=cands)


def polarization_run(W: Channel, op: CayleyTable, depth: int, mode: str = "exhaustive",
                     samples: int = 1000, seed: Optional[int] = None, delta: float = 0.05,
                     epsilon: Optional[float] = None, threads: int = 1,
                     allow_non_up: bool = False, max_outputs: int = MAX_OUTPUTS,
                     certify: Optional[Callable] = None) -> PolarRun:
    """Evaluate W^s over all sign sequences (exhaustive) or sampled paths (montecarlo).

    Records come back sorted by sequence, independent of ``threads``.  When the
    output budget is hit, BudgetExceeded carries the finished records in
    ``partial`` (a PolarRun flagged partial).
    """
    _check(W, op)
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if not allow_non_up and not is_uniformity_preserving(op):
        raise NotUniformityPreserving("the process needs a uniformity-preserving operation")
    certify = certify or default_certifier(W.input_size, delta, epsilon)
    threads = max(1, int(threads))
    if mode == "exhaustive":
        records, errors = _run_exhaustive(W, op, depth, certify, threads, max_outputs)
        extra = {}
    elif mode == "montecarlo":
        if seed is None:
            raise ValueError("montecarlo mode needs a seed")
        records, errors = _run_montecarlo(W, op, depth, samples, seed, certify, threads, max_outputs)
        extra = {"samples": samples, "seed": seed}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    extra.update({"delta": delta, "epsilon": epsilon, "partial": bool(errors)})
    run = PolarRun(records, _summarize(W, records, mode, depth, extra), bool(errors),
                   errors[0] if errors else None)
    if errors:
        raise BudgetExceeded(errors[0], partial=run)
    return run


def _run_exhaustive(W, op, depth, certify, threads, max_outputs):
    split = min(depth, 3)
    frontier = [("", W)]
    errors = []
    for _ in range(split):
        nxt = []
        for s, ch in frontier:
            for sign in "-+":
                try:
                    nxt.append((s + sign, transform(ch, op, sign, max_outputs)))
                except BudgetExceeded as e:
                    errors.append(f"{s + sign}: {e}")
        frontier = nxt

    def subtree(item):
        s, ch = item
        out = []
        try:
            for leaf_s, leaf in iter_tree(ch, op, depth, s, max_outputs):
                out.append(make_record(leaf_s, leaf, certify))
        except BudgetExceeded as e:
            return out, f"{s}: {e}"
        return out, None

    if threads == 1:
        results = [subtree(item) for item in frontier]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(subtree, frontier))
    records = [r for rs, _ in results for r in rs]
    errors += [e for _, e in results if e]
    records.sort(key=lambda r: sign_key(r.s))
    return records, errors


def path_signs(seed: int, index: int, depth: int) -> str:
    """Signs of sampled path ``index``, derived only from (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    bits = rng.integers(0, 2, size=depth)
    return "".join("-+"[b] for b in bits)


def _run_montecarlo(W, op, depth, samples, seed, certify, threads, max_outputs):
    paths = {}
    for i in range(samples):
        paths.setdefault(path_signs(seed, i, depth), []).append(i)
    # each worker owns the paths sharing a short prefix, so no node is built twice
    split = min(depth, 3)
    groups = {}
    for s in paths:
        groups.setdefault(s[:split], []).append(s)

    def run_group(members):
        cache = {"": W}
        out = {}
        for s in sorted(members, key=sign_key):
            try:
                out[s] = make_record(s, _cached_node(cache, W, op, s, max_outputs), certify)
            except BudgetExceeded as e:
                out[s] = e
        return out

    found = {}
    items = [groups[k] for k in sorted(groups, key=sign_key)]
    if threads == 1 or len(items) == 1:
        for members in items:
            found.update(run_group(members))
    else:
        with ThreadPoolExecutor(threads) as pool:
            for part in pool.map(run_group, items):
                found.update(part)
    records, errors = [], []
    for s in sorted(paths, key=sign_key):
        r = found[s]
        if isinstance(r, BudgetExceeded):
            errors.extend(f"path {i} ({s}): {r}" for i in paths[s])
        else:
            records.extend(r for _ in paths[s])
    errors.sort(key=lambda e: int(e.split()[1]))
    return records, errors


def _cached_node(cache: dict, W, op, s: str, max_outputs: int) -> Channel:
    """Build W^s through ``cache``; failed nodes are cached as exceptions."""
    ch = cache.get(s)
    if ch is None:
        try:
            ch = transform(_cached_node(cache, W, op, s[:-1], max_outputs), op, s[-1], max_outputs)
        except BudgetExceeded as e:
            ch = e
        cache[s] = ch
    if isinstance(ch, BudgetExceeded):
        raise ch
    return ch


# Bhattacharyya bound verification

@dataclass
class BhattReport:
    minus_worst_slack: float = float("inf")
    plus_worst_error: float = 0.0
    zmin_worst_slack: float = float("inf")
    nodes: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _pair_z(W: Channel) -> np.ndarray:
    return bhattacharyya_matrix(W)


def check_bhat_minus(W: Channel, op: CayleyTable, minus: Optional[Channel] = None) -> float:
    """Smallest slack of Z(W-_{u,u'}) - Z(W_{u*v,u'*v})/|X| over u != u' and v."""
    minus = minus or minus_transform(W, op)
    zm, z = _pair_z(minus), _pair_z(W)
    a = op.array
    n = W.input_size
    worst = float("inf")
    for v in range(n):
        rhs = z[np.ix_(a[:, v], a[:, v])] / n
        slack = zm - rhs
        np.fill_diagonal(slack, np.inf)
        worst = min(worst, float(slack.min()))
    return worst


def check_bhat_plus(W: Channel, op: CayleyTable, plus: Optional[Channel] = None) -> float:
    """Largest |Z(W+_{u,u'}) - 1/|X| sum_w Z(W_{w*u,w*u'}) Z(W_{u,u'})|."""
    plus = plus or plus_transform(W, op)
    zp, z = _pair_z(plus), _pair_z(W)
    a = op.array
    n = W.input_size
    rhs = np.zeros((n, n))
    for w in range(n):
        rhs += z[np.ix_(a[w], a[w])]
    rhs = rhs / n * z
    return float(np.max(np.abs(zp - rhs)))


def zmin_floor(zmin: float, n: int, s: str) -> float:
    """Lower bound on Z_min(W^s) from Z_min(W)."""
    minus, plus = s.count("-"), s.count("+")
    return (zmin / n) ** ((minus + 1) * 2 ** plus)


def verify_bhatt_bounds(W: Channel, op: CayleyTable, depth: int,
                        max_outputs: int = MAX_OUTPUTS) -> BhattReport:
    """Check the pairwise Bhattacharyya bounds at every node up to ``depth``."""
    if depth > 4:
        raise ValueError("depth is capped at 4")
    if not is_uniformity_preserving(op):
        raise NotUniformityPreserving("bound checks need a uniformity-preserving operation")
    _check(W, op)
    rep = BhattReport()
    n = W.input_size
    zmin0 = bhattacharyya(W)[1]

    def visit(s: str, ch: Channel):
        rep.nodes += 1
        if s:
            zmin = bhattacharyya(ch)[1]
            slack = zmin - zmin_floor(zmin0, n, s)
            rep.zmin_worst_slack = min(rep.zmin_worst_slack, slack)
            if slack < -TOL:
                rep.violations.append(f"min-pair bound at {s}: slack {slack:.3g}")
        if len(s) == depth:
            return
        m = minus_transform(ch, op, max_outputs)
        p = plus_transform(ch, op, max_outputs)
        ms = check_bhat_minus(ch, op, m)
        pe = check_bhat_plus(ch, op, p)
        rep.minus_worst_slack = min(rep.minus_worst_slack, ms)
        rep.plus_worst_error = max(rep.plus_worst_error, pe)
        if ms < -TOL:
            rep.violations.append(f"minus inequality at {s or 'root'}: slack {ms:.3g}")
        if pe > TOL:
            rep.violations.append(f"plus identity at {s or 'root'}: error {pe:.3g}")
        visit(s + "-", m)
        visit(s + "+", p)

    visit("", W)
    return rep


def bhat_inequality_slacks(W: Channel) -> dict:
    """Slacks (>= 0 when the bound holds) of the Z/I/P_e inequalities."""
    from .channel import prob_error

    n = W.input_size
    z = bhattacharyya(W)[0]
    info = mutual_info(W)
    pe = prob_error(W)
    return {
        "z_squared_vs_capacity": 1 - info / log2(n) - z * z,
        "capacity_lower_bound": info - log2(n / (1 + (n - 1) * z)),
        "pe_lower": pe - z * z / 4,
        "pe_upper": (n - 1) * z - pe,
    }


def zero_exponent_decay(W: Channel, op: CayleyTable, depth: int,
                        max_outputs: int = MAX_OUTPUTS) -> float:
    """Smallest Z_max(W^s) - Z_max(W)/|X|^|s| over all s of length 1..depth."""
    n = W.input_size
    z0 = bhattacharyya(W)[2]
    worst = float("inf")

    def visit(s, ch):
        nonlocal worst
        if s:
            worst = min(worst, bhattacharyya(ch)[2] - z0 / n ** len(s))
        if len(s) < depth:
            for sign in "-+":
                visit(s + sign, transform(ch, op, sign, max_outputs))

    visit("", W)
    return worst


# stable-partition diagnostics

@dataclass(frozen=True)
class LevelScan:
    fraction: float
    fraction_weak: float
    witnesses: dict


def stable_level_scan(W: Channel, op: CayleyTable, depth: int, delta: float,
                      max_outputs: int = MAX_OUTPUTS) -> LevelScan:
    """Fraction of sequences whose channel sits at a stable-partition level.

    For each leaf W^s, looks for a stable partition Hs of the inverse operation
    with |I(W^s[H']) - log(|Hs| * ||Hs meet H'|| / ||H'||)| < delta for every
    stable H'.  The weak fraction only checks H' = singletons and H' = Hs.
    """
    if not is_uniformity_preserving(op):
        raise NotUniformityPreserving("scan needs a uniformity-preserving operation")
    n = W.input_size
    stable = list(enumerate_stable_partitions(inverse_op(op)))
    single = singletons(n)
    full = weak = 0
    witnesses = {}
    total = 0
    for s, leaf in iter_tree(W, op, depth, max_outputs=max_outputs):
        total += 1
        info = {H: mutual_info(project_channel(leaf, H)) for H in stable}

        def level(hs: Partition, h: Partition) -> float:
            return log2(hs.num_blocks * meet(hs, h).block_size / h.block_size)

        hit_full = hit_weak = None
        for hs in stable:
            if hit_full is None and all(abs(info[h] - level(hs, h)) < delta for h in stable):
                hit_full = hs
            if hit_weak is None and all(abs(info[h] - level(hs, h)) < delta for h in (single, hs)):
                hit_weak = hs
        full += hit_full is not None
        weak += hit_weak is not None
        witnesses[s] = hit_full
    return LevelScan(full / total, weak / total, witnesses)
