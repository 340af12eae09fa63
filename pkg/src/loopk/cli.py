"""Command-line interface: ``loopk <subcommand> ...``.

Every output starts with ``#`` header lines carrying the tool version and the
full run configuration as JSON, so a file can be regenerated from its header.
Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from fractions import Fraction

from . import __version__
from .bits import ParseError, check_bits
from .codec import decode, encode, prune
from .compiler import CapacityConfig, compile_program
from .complexity import (ArchBounds, enumerate_table, mdl_penalty, n_upper, prior_estimate,
                         sandwich_verify, space_size)
from .machine import AssemblyError, interpret, kt_upper, load_program, search_k_upper
from .netvm import from_text, nonzero_count, run, to_text
from .precision import parse_spec
from .witness import Permutation, build_perm_network, perm_string, tightness_report


class DomainError(Exception):
    pass


def _bitstring(text: str) -> str:
    if text in ("eps", "ε", "''", '""'):
        return ""
    check_bits(text)
    return text


def _read(path: str | None) -> str:
    if path in (None, "-"):
        return sys.stdin.read()
    with open(path) as f:
        return f.read()


def _strip_comments(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if not line.lstrip().startswith("#"))


def _header(args) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    return f"# loopk {__version__}\n# config: {json.dumps(cfg, sort_keys=True)}\n"


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _emit(args, body: str, out_path: str | None = None):
    text = _header(args) + body
    path = out_path if out_path is not None else getattr(args, "out", None)
    if path:
        with open(path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _bounds(args) -> ArchBounds:
    return ArchBounds(args.d, args.L, args.W, parse_spec(args.spec), args.T, args.output_limit)


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(args):
    net = from_text(_strip_comments(_read(args.net)))
    res = run(net, args.budget, args.output_limit)
    _emit(args, _csv([res.row()]))


def cmd_encode(args):
    net = from_text(_strip_comments(_read(args.net)))
    if not args.no_prune:
        net = prune(net)
    bits, stats = encode(net)
    body = f"# W={stats.W} header_bits={stats.header_bits} total_bits={stats.total_bits} " \
           f"bound={stats.bound_value}\n{bits}\n"
    _emit(args, body)


def cmd_decode(args):
    bits = "".join(_strip_comments(_read(args.bits)).split())
    check_bits(bits)
    net = decode(bits, parse_spec(args.spec))
    _emit(args, to_text(net))


def _program(args):
    if args.text is not None:
        return load_program(args.text)
    return load_program(_read(args.program))


def cmd_interpret(args):
    p = _program(args)
    res = interpret(p, args.budget, args.output_limit)
    _emit(args, _csv([{"program_bits": len(p), **res.row()}]))


def cmd_assemble(args):
    p = _program(args)
    _emit(args, f"# {p.text()}\n# {p.hex()}\n{p.bits}\n")


def cmd_compile(args):
    p = _program(args)
    cfg = CapacityConfig(args.max_bits, args.reg_cap, args.step_cap)
    net, rep = compile_program(p, cfg)
    if args.out:
        _emit(args, to_text(net), args.out)
    kv = "".join(f"{k}={v}\n" for k, v in rep.row().items())
    _emit(args, kv + "\n" + _csv([rep.row()]), out_path="")


def cmd_witness(args):
    if args.tightness:
        ns = [int(x) for x in args.tightness.split(",")]
        rows = tightness_report(ns, args.samples, args.seed)
        _emit(args, _csv([r.row() for r in rows]))
        return
    if args.perm:
        pi = Permutation.parse(args.perm)
        if pi.N != args.n:
            raise DomainError(f"--perm has {pi.N} entries but --n is {args.n}")
    else:
        pi = Permutation.random(args.n, random.Random(args.seed))
    net, counts = build_perm_network(pi)
    row = {"N": pi.N, "perm": pi.text(), "s": perm_string(pi), "pi_dependent": counts.pi_dependent,
           "control": counts.control, "total": counts.total}
    table = "".join(f"# {line}\n" for line in _csv([row]).splitlines())
    _emit(args, table + to_text(net))


def cmd_enumerate(args):
    b = _bounds(args)
    _emit(args, f"# space_size={space_size(b)}\n" + _csv(enumerate_table(b, args.jobs)))


def cmd_nupper(args):
    s = _bitstring(args.s)
    r = n_upper(s, _bounds(args), args.jobs)
    row = {"s": s or "<eps>", "n_hat": "" if r.n_hat is None else r.n_hat,
           "index": "" if r.index is None else r.index, "certificate": r.certificate}
    body = _csv([row])
    if r.witness is not None:
        body += "".join(f"# {line}\n" for line in to_text(r.witness).splitlines())
    _emit(args, body)


def cmd_kupper(args):
    s = _bitstring(args.s)
    k = search_k_upper(s, args.max_len, args.budget, args.jobs)
    row = {"s": s or "<eps>", "k_hat": "" if k.k_hat is None else k.k_hat,
           "witness": k.witness.text() if k.witness else ""}
    if args.kt:
        kt = kt_upper(s, args.max_len, args.budget, args.jobs)
        row.update({"kt_hat": "" if kt.kt_hat is None else f"{kt.kt_hat:.6f}",
                    "kt_length": "" if kt.length is None else kt.length,
                    "kt_steps": "" if kt.steps is None else kt.steps,
                    "kt_witness": kt.witness.text() if kt.witness else ""})
    _emit(args, _csv([row]))


def cmd_sandwich(args):
    s = _bitstring(args.s)
    rep = sandwich_verify(s, args.max_len, args.budget, _bounds(args), jobs=args.jobs,
                          run_compiled_check=not args.skip_run)
    _emit(args, "# consistency checks between upper bounds, not tightness proofs\n"
          + _csv([rep.row()]))


def cmd_prior(args):
    b = _bounds(args)
    t = prior_estimate(b, args.jobs, args.cap, args.k_len)
    rows = [r.row() for r in t.rows] + [t.undefined.row()]
    alpha = "" if t.alpha_hat is None else f"{t.alpha_hat:.12g}"
    _emit(args, f"# space_size={t.space_size} alpha_hat={alpha}\n" + _csv(rows))


def cmd_mdl(args):
    v = mdl_penalty(Fraction(args.norm2sq), args.m, Fraction(args.eta), Fraction(args.cd))
    _emit(args, _csv([{"norm2sq": args.norm2sq, "m": args.m, "eta": args.eta, "c_d": args.cd,
                       "penalty": f"{v:.12g}"}]))


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loopk", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"loopk {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        return p

    def space(p):
        p.add_argument("--d", type=int, default=3)
        p.add_argument("--L", type=int, default=1)
        p.add_argument("--W", type=int, default=3)
        p.add_argument("--T", type=int, default=16)
        p.add_argument("--spec", default="ternary")
        p.add_argument("--output-limit", type=int, default=64)
        p.add_argument("--jobs", type=int, default=1)

    def program(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--program", help="file with assembly, rm4:<hex> or raw bits (- = stdin)")
        g.add_argument("--text", help="program given inline")

    p = add("run", cmd_run, "run a netfile")
    p.add_argument("--net")
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--output-limit", type=int, default=1 << 20)
    p.add_argument("--out")

    p = add("encode", cmd_encode, "encode a netfile as a bitstream")
    p.add_argument("--net")
    p.add_argument("--no-prune", action="store_true")
    p.add_argument("--out")

    p = add("decode", cmd_decode, "decode a bitstream to a netfile")
    p.add_argument("--bits")
    p.add_argument("--spec", default="ternary")
    p.add_argument("--out")

    p = add("interpret", cmd_interpret, "run an RM-4 program")
    program(p)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--output-limit", type=int, default=1 << 20)
    p.add_argument("--out")

    p = add("assemble", cmd_assemble, "assemble RM-4 text to bits")
    program(p)
    p.add_argument("--out")

    p = add("compile", cmd_compile, "compile an RM-4 program to a network")
    program(p)
    p.add_argument("--max-bits", type=int, default=128)
    p.add_argument("--reg-cap", type=int, default=256)
    p.add_argument("--step-cap", type=int, default=1000)
    p.add_argument("--out")

    p = add("witness", cmd_witness, "permutation witness network")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--perm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tightness", help="comma-separated N list: print the tightness table")
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--out")

    p = add("enumerate", cmd_enumerate, "enumerate a bounded network space")
    space(p)
    p.add_argument("--out")

    p = add("nupper", cmd_nupper, "network-size upper bound for a string")
    p.add_argument("--s", required=True)
    space(p)
    p.add_argument("--out")

    p = add("kupper", cmd_kupper, "RM-4 program-length upper bound for a string")
    p.add_argument("--s", required=True)
    p.add_argument("--max-len", type=int, default=16)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--kt", action="store_true", help="also report the time-penalised bound")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")

    p = add("sandwich", cmd_sandwich, "check both sandwich directions for a string")
    p.add_argument("--s", required=True)
    p.add_argument("--max-len", type=int, default=12)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--skip-run", action="store_true", help="do not run the compiled witness")
    space(p)
    p.add_argument("--out")

    p = add("prior", cmd_prior, "exhaustive induced output prior")
    space(p)
    p.set_defaults(W=2)
    p.add_argument("--cap", type=int, default=1_000_000)
    p.add_argument("--k-len", type=int, default=12, help="K^ anchor search length (0 = off)")
    p.add_argument("--out")

    p = add("mdl", cmd_mdl, "generalization penalty")
    p.add_argument("--norm2sq", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--eta", required=True)
    p.add_argument("--cd", default="1")
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        args.func(args)
    except (DomainError, ParseError, AssemblyError, ValueError, OSError, ZeroDivisionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
