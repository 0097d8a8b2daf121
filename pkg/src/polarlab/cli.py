"""Command-line driver.

Exit codes: 0 success, 2 input error, 3 cap or budget exceeded, 4 property violation.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import channel as chan
from . import magma, polar
from .errors import BudgetExceeded, ParseError, PolarlabError, SizeCapExceeded
from .mac import (Mac, adder_mac, mac_easiness_check, mac_polarization_run, parse_mac, perfect_mac,
                  product_channel_check, random_mac, reduction_consistent, useless_mac)

EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_VIOLATION = 0, 2, 3, 4


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None


def _num(text: str, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise InputError(f"bad number {text!r}") from None


def load_op(spec: str) -> magma.CayleyTable:
    """File path, or one of: xor, add:q, sub:q, projection:n, constant:n, shift:n, zero-exponent."""
    name, _, arg = spec.partition(":")
    builtins = {
        "xor": lambda: magma.xor(),
        "add": lambda: magma.add_mod(_num(arg, int)),
        "sub": lambda: magma.sub_mod(_num(arg, int)),
        "projection": lambda: magma.projection(_num(arg or "2", int)),
        "constant": lambda: magma.constant(_num(arg or "2", int)),
        "shift": lambda: magma.shift(_num(arg or "2", int)),
        "zero-exponent": lambda: magma.ZERO_EXPONENT_TABLE,
    }
    if name in builtins and not Path(spec).exists():
        return builtins[name]()
    return magma.parse_op(_read(spec))


def load_channel(spec: str) -> chan.Channel:
    """File path, or one of: bec:p, bsc:q, perfect:n, useless:n, random:seed:n:m."""
    name, _, arg = spec.partition(":")
    if not Path(spec).exists():
        if name == "bec":
            return chan.bec(_num(arg))
        if name == "bsc":
            return chan.bsc(_num(arg))
        if name == "perfect":
            return chan.perfect(_num(arg, int))
        if name == "useless":
            return chan.useless(_num(arg, int))
        if name == "random":
            seed, n, m = (_num(t, int) for t in arg.split(":"))
            return chan.random_channel(seed, n, m)
    return chan.parse_channel(_read(spec))


def _sizes(text: str) -> tuple:
    return tuple(_num(t, int) for t in text.split("x"))


def load_mac(spec: str) -> Mac:
    """File path, or one of: adder, perfect:2x2, useless:2x2, random:seed:2x2:m."""
    name, _, arg = spec.partition(":")
    if not Path(spec).exists():
        if name == "adder":
            return adder_mac()
        if name == "perfect":
            return perfect_mac(_sizes(arg))
        if name == "useless":
            return useless_mac(_sizes(arg))
        if name == "random":
            seed, sizes, m = arg.split(":")
            return random_mac(_num(seed, int), _sizes(sizes), _num(m, int))
    return parse_mac(_read(spec))


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("POLARLAB_THREADS")
    if env:
        return _num(env, int)
    return 1


def _emit(text: str, path: Optional[str]):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _table(rows) -> str:
    width = max(len(str(k)) for k, _ in rows)
    return "".join(f"{str(k):<{width}}  {v}\n" for k, v in rows)


def _yes(flag: bool) -> str:
    return "yes" if flag else "no"


# commands

def cmd_op_classify(args) -> int:
    op = load_op(args.op)
    c = magma.classify(op)
    if args.format == "json":
        d = {
            "uniformity_preserving": c.uniformity_preserving, "irreducible": c.irreducible,
            "ergodic": c.ergodic, "quasigroup": c.quasigroup,
            "inverse_strongly_ergodic": c.inverse_strongly_ergodic, "polarizing": c.polarizing,
            "zero_exponent_condition": c.zero_exponent_condition, "scon_estimate": c.scon_estimate,
            "invariant_set": list(c.invariant_set) if c.invariant_set else None,
            "cyclic_partition": [list(h) for h in c.cyclic_partition] if c.cyclic_partition else None,
            "inverse_stable_partitions": [str(p) for p in c.inverse_stable_partitions],
            "residue_defects": [{"H": str(h), "K": str(k)} for h, k in c.residue_defects],
        }
        _emit(json.dumps(d, indent=2) + "\n", args.output)
        return EXIT_OK
    rows = [
        ("uniformity preserving", _yes(c.uniformity_preserving)),
        ("irreducible", _yes(c.irreducible)),
        ("ergodic", _yes(c.ergodic)),
        ("quasigroup", _yes(c.quasigroup)),
        ("inverse strongly ergodic", _yes(c.inverse_strongly_ergodic)),
        ("scon estimate", c.scon_estimate if c.scon_estimate is not None else "-"),
    ]
    if c.invariant_set:
        rows.append(("invariant set", ",".join(map(str, c.invariant_set))))
    if c.cyclic_partition:
        rows.append(("cyclic classes", " -> ".join(",".join(map(str, h)) for h in c.cyclic_partition)))
    if c.uniformity_preserving:
        rows.append(("stable partitions of inverse", "  ".join(map(str, c.inverse_stable_partitions))))
    for h, k in c.residue_defects:
        rows.append(("residue defect", f"H={h} K={k}"))
    _emit(c.summary_line() + "\n" + _table(rows), args.output)
    return EXIT_OK


def cmd_op_product(args) -> int:
    op = magma.product_op([load_op(s) for s in args.ops])
    _emit(op.to_text(), args.output)
    return EXIT_OK


def _channel_info(W: chan.Channel) -> dict:
    d = {"inputs": W.input_size, "outputs": W.output_size,
         "canonical_outputs": W.canonical().output_size,
         "I": chan.mutual_info(W), "Pe": chan.prob_error(W)}
    if W.input_size >= 2:
        d["Z"], d["Zmin"], d["Zmax"] = chan.bhattacharyya(W)
    return d


def _emit_dict(d: dict, fmt: str, path: Optional[str]):
    if fmt == "json":
        _emit(json.dumps(d, indent=2) + "\n", path)
    elif fmt == "csv":
        keys = list(d)
        _emit(",".join(keys) + "\n" + ",".join(str(d[k]) for k in keys) + "\n", path)
    else:
        _emit(_table(list(d.items())), path)


def cmd_chan_info(args) -> int:
    W = load_channel(args.channel)
    d = _channel_info(W)
    if args.delta is not None:
        d.update({f"easiness_{k}": v for k, v in
                  chan.easiness_check(W, args.delta, args.epsilon).to_dict().items()})
    _emit_dict(d, args.format, args.output)
    return EXIT_OK


def cmd_chan_transform(args) -> int:
    W = load_channel(args.channel)
    op = load_op(args.op)
    signs = args.sign.replace("m", "-").replace("p", "+")
    out = polar.transform_seq(W, op, signs, args.max_outputs)
    if args.format == "channel":
        _emit(out.to_text(), args.output)
    else:
        _emit_dict({"sign": signs, **_channel_info(out)}, args.format, args.output)
    return EXIT_OK


def _write_run(run: polar.PolarRun, args):
    if args.format == "csv":
        text = run.to_csv()
        if run.partial:
            text = f"# partial: {run.error}\n" + text
        _emit(text, args.output)
    elif args.format == "json":
        _emit(json.dumps({"summary": run.summary,
                          "records": [dict(zip(polar.CSV_COLUMNS, r.row())) for r in run.records]},
                         indent=2) + "\n", args.output)
    else:
        s = run.summary
        rows = [(k, s[k]) for k in sorted(s) if k != "histogram"]
        rows += [(f"I in [{b['lo']:.2f},{b['hi']:.2f})", b["count"]) for b in s["histogram"]]
        _emit(_table(rows), args.output)
    if args.summary:
        Path(args.summary).write_text(run.summary_json() + "\n", encoding="utf-8")


def _run_or_partial(fn, args) -> int:
    try:
        run = fn()
    except BudgetExceeded as e:
        if e.partial is not None:
            _write_run(e.partial, args)
        print(f"budget exceeded: {e} (partial results written)", file=sys.stderr)
        return EXIT_BUDGET
    _write_run(run, args)
    return EXIT_OK


def cmd_polarize(args) -> int:
    W = load_channel(args.channel)
    op = load_op(args.op)
    if args.mode == "montecarlo" and args.seed is None:
        raise InputError("montecarlo mode needs --seed")
    return _run_or_partial(lambda: polar.polarization_run(
        W, op, args.depth, args.mode, args.samples, args.seed, args.delta, args.epsilon,
        _threads(args), allow_non_up=args.allow_non_up, max_outputs=args.max_outputs), args)


def _default_suite():
    rng = np.random.default_rng(2024)
    suite = [
        ("bec:0.3", chan.bec(0.3), magma.xor()),
        ("bsc:0.11", chan.bsc(0.11), magma.xor()),
        ("perfect:3", chan.perfect(3), magma.add_mod(3)),
        ("random:2x3", chan.random_channel(11, 2, 3), magma.xor()),
        ("random:3x3", chan.random_channel(12, 3, 3), magma.add_mod(3)),
    ]
    suite.append(("random:4x2 zero-exponent", chan.random_channel(13, 4, 2), magma.ZERO_EXPONENT_TABLE))
    suite.append(("random:3x2 random-op", chan.random_channel(14, 3, 2), magma.random_up_op(rng, 3)))
    return suite


def cmd_verify(args) -> int:
    if args.channel:
        W = load_channel(args.channel)
        op = load_op(args.op) if args.op else (magma.xor() if W.input_size == 2
                                                else magma.add_mod(W.input_size))
        suite = [(args.channel, W, op)]
    else:
        suite = _default_suite()
    results = []
    bad = False
    for name, W, op in suite:
        row = {"channel": name}
        slacks = polar.bhat_inequality_slacks(W) if W.input_size >= 2 else {}
        row.update(slacks)
        rep = polar.verify_bhatt_bounds(W, op, args.depth, args.max_outputs)
        row.update({"minus_slack": rep.minus_worst_slack, "plus_error": rep.plus_worst_error,
                    "zmin_slack": rep.zmin_worst_slack if args.depth else None, "nodes": rep.nodes})
        viol = list(rep.violations) + [f"{k}: {v:.3g}" for k, v in slacks.items() if v < -polar.TOL]
        row["violations"] = viol
        bad = bad or bool(viol)
        results.append(row)
    if args.format == "json":
        _emit(json.dumps(results, indent=2) + "\n", args.output)
    else:
        lines = []
        for r in results:
            lines.append(f"[{r['channel']}] " + ("ok" if not r["violations"] else "VIOLATION"))
            lines.append(_table([(k, v) for k, v in r.items() if k not in ("channel", "violations")]))
            lines += [f"  ! {v}\n" for v in r["violations"]]
        _emit("".join(ln if ln.endswith("\n") else ln + "\n" for ln in lines), args.output)
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_mac(args) -> int:
    mac = load_mac(args.mac)
    ops = [load_op(s) for s in args.ops]
    if args.action == "easiness":
        cert = mac_easiness_check(mac, ops, args.delta, args.epsilon)
        d = cert.to_dict()
        d["product_channel_verdict"] = product_channel_check(mac, ops, args.delta, args.epsilon).verdict
        consistent = None
        if args.check_reduction:
            consistent = reduction_consistent(mac, ops, args.reduction_depth)
            d["direct_vs_reduced"] = "equal" if consistent else "different"
        if args.format == "json":
            _emit(json.dumps(d, indent=2) + "\n", args.output)
        else:
            text = _table([(k, v) for k, v in d.items() if k != "direct_vs_reduced"])
            if consistent is not None:
                text += f"direct vs reduced transforms: {d['direct_vs_reduced']}\n"
            _emit(text, args.output)
        return EXIT_VIOLATION if consistent is False else EXIT_OK
    if args.mode == "montecarlo" and args.seed is None:
        raise InputError("montecarlo mode needs --seed")
    return _run_or_partial(lambda: mac_polarization_run(
        mac, ops, args.depth, args.mode, args.samples, args.seed, args.delta, args.epsilon,
        _threads(args), max_outputs=args.max_outputs), args)


# parser

def _common(p, formats=("table", "csv", "json"), default="table"):
    p.add_argument("--format", choices=formats, default=default)
    p.add_argument("--output", "-o", help="write to this file instead of stdout")


def _run_flags(p):
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--mode", choices=("exhaustive", "montecarlo"), default="exhaustive")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--threads", type=int, help="worker threads (default: $POLARLAB_THREADS or 1)")
    p.add_argument("--max-outputs", type=int, default=polar.MAX_OUTPUTS)
    p.add_argument("--summary", help="also write the JSON summary to this file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polarlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    op = sub.add_parser("op", help="binary operations").add_subparsers(dest="action", required=True)
    p = op.add_parser("classify", help="classify an operation")
    p.add_argument("op")
    _common(p, ("table", "json"))
    p.set_defaults(func=cmd_op_classify)
    p = op.add_parser("product", help="componentwise product of operations")
    p.add_argument("ops", nargs="+")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_op_product)

    ch = sub.add_parser("chan", help="channels").add_subparsers(dest="action", required=True)
    p = ch.add_parser("info", help="capacity, error probability, Bhattacharyya parameters")
    p.add_argument("channel")
    p.add_argument("--delta", type=float, help="also run the easiness check")
    p.add_argument("--epsilon", type=float)
    _common(p)
    p.set_defaults(func=cmd_chan_info)
    p = ch.add_parser("transform", help="apply a sign sequence of transforms")
    p.add_argument("channel")
    p.add_argument("--op", required=True)
    p.add_argument("--sign", required=True, help="signs applied left to right, e.g. --sign=-+- or --sign mpm")
    p.add_argument("--max-outputs", type=int, default=polar.MAX_OUTPUTS)
    _common(p, ("table", "csv", "json", "channel"))
    p.set_defaults(func=cmd_chan_transform)

    p = sub.add_parser("polarize", help="run the polarization process")
    p.add_argument("--channel", required=True)
    p.add_argument("--op", required=True)
    p.add_argument("--allow-non-up", action="store_true",
                   help="run even if the operation is not uniformity preserving")
    _run_flags(p)
    _common(p, default="csv")
    p.set_defaults(func=cmd_polarize)

    p = sub.add_parser("verify", help="Bhattacharyya inequality and transform bound checks")
    p.add_argument("--channel")
    p.add_argument("--op")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--max-outputs", type=int, default=polar.MAX_OUTPUTS)
    _common(p, ("table", "json"))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("mac", help="multiple-access channels")
    p.add_argument("action", choices=("easiness", "polarize"))
    p.add_argument("--mac", required=True)
    p.add_argument("--ops", nargs="+", required=True)
    p.add_argument("--check-reduction", action="store_true",
                   help="compare direct MAC transforms with reduced single-user transforms")
    p.add_argument("--reduction-depth", type=int, default=2)
    p.add_argument("--depth", type=int, default=0)
    p.add_argument("--mode", choices=("exhaustive", "montecarlo"), default="exhaustive")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--threads", type=int)
    p.add_argument("--max-outputs", type=int, default=polar.MAX_OUTPUTS)
    p.add_argument("--summary")
    _common(p)
    p.set_defaults(func=cmd_mac)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SizeCapExceeded, BudgetExceeded) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (InputError, ParseError, PolarlabError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
