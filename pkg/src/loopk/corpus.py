"""Seeded test corpora: random sparse networks and RM-4 programs."""

from __future__ import annotations

import random

from .machine import Instruction, Program, _make, execute
from .netvm import HardAttention, Network, PerPositionBias, TiedAffine
from .precision import PrecisionSpec, value_alphabet


def random_network(rng: random.Random, spec: PrecisionSpec, W: int, d: int | None = None,
                   P: int = 1, layers: int | None = None, kinds=("affine", "posbias"),
                   gated: bool = True) -> Network:
    """A valid network with exactly W non-zero parameters spread over layers."""
    if d is None:
        d = rng.randint(3, max(3, min(2 * W + 3, 64)))
    if layers is None:
        layers = rng.randint(1, max(1, min(W, 4))) if W else 0
    alphabet = value_alphabet(spec)
    npos = (P - 1).bit_length() if P > 1 else 0
    nsrc = d + npos
    counts = [0] * layers
    for _ in range(W):
        counts[rng.randrange(layers)] += 1
    out = []
    while counts:
        n = counts.pop(0)
        kind = rng.choice(kinds)
        if kind == "posbias":
            gates = range(0, nsrc + 1) if gated else [0]
            slots = [(p, g, c) for p in range(1, P + 1) for g in gates for c in range(1, d + 1)]
        elif kind == "affine":
            slots = [("w", s, t) for s in range(1, nsrc + 1) for t in range(1, d + 1)]
            slots += [("b", c, 0) for c in range(1, d + 1)]
        else:
            h = 3
            slots = [(m, s, k) for m in "qkv" for s in range(1, nsrc + 1) for k in range(1, h + 1)]
            slots += [("o", k, t) for k in range(1, h + 1) for t in range(1, d + 1)]
        picked = rng.sample(slots, min(n, len(slots)))
        if n > len(picked):  # layer is full: spill into an extra layer
            counts.append(n - len(picked))
        vals = [rng.choice(alphabet) for _ in picked]
        if kind == "posbias":
            out.append(PerPositionBias([(*s, v) for s, v in zip(picked, vals)]))
        elif kind == "affine":
            out.append(TiedAffine([(s, t, v) for (k, s, t), v in zip(picked, vals) if k == "w"],
                                  [(s, v) for (k, s, _), v in zip(picked, vals) if k == "b"]))
        else:
            m = {k: [] for k in "qkvo"}
            for (k, a, b), v in zip(picked, vals):
                m[k].append((a, b, v))
            out.append(HardAttention(m["q"], m["k"], m["v"], m["o"]))
    return Network(spec, P, d, tuple(out))


# ---------------------------------------------------------------------------
# RM-4 program corpus

def _ins(op, reg=None, addr=None):
    return Instruction(op, reg, addr)


def _straight(rng):
    n = rng.randint(1, 8)
    body = [_ins(rng.choice(["OUT0", "OUT1", "INC"]), None, None) for _ in range(n)]
    body = [_ins(i.op, rng.randrange(4)) if i.op == "INC" else i for i in body]
    if rng.random() < 0.5:
        body.append(_ins("HALT"))
    return body


def _counted_loop(rng):
    """r := k; repeat k times: emit a bit pattern."""
    k = rng.randint(1, 5)
    r = rng.randrange(4)
    pat = [rng.choice(["OUT0", "OUT1"]) for _ in range(rng.randint(1, 3))]
    code = [_ins("INC", r) for _ in range(k)]
    top = len(code)
    code.append(None)  # DECJZ placeholder
    code += [_ins(op) for op in pat]
    code.append(_ins("JMP", None, top))
    code[top] = _ins("DECJZ", r, len(code))
    code.append(_ins(rng.choice(["HALT", "OUT1", "OUT0"])))
    return code


def _arith(rng):
    """Add r_a into r_b, then print r_b in unary followed by a 0."""
    a, b = rng.sample(range(4), 2)
    x, y = rng.randint(0, 4), rng.randint(0, 3)
    code = [_ins("INC", a) for _ in range(x)] + [_ins("INC", b) for _ in range(y)]
    top = len(code)
    code += [None, _ins("INC", b), _ins("JMP", None, top)]
    code[top] = _ins("DECJZ", a, top + 3)
    top2 = len(code)
    code += [None, _ins("OUT1"), _ins("JMP", None, top2)]
    code[top2] = _ins("DECJZ", b, top2 + 3)
    code += [_ins("OUT0"), _ins("HALT")]
    return code


def _nested(rng):
    """Nested loops: for i < m: for j < n: OUT1; OUT0."""
    m, n = rng.randint(1, 3), rng.randint(1, 3)
    code = [_ins("INC", 0) for _ in range(m)]
    outer = len(code)
    code.append(None)                          # DECJZ r0 -> end
    code += [_ins("INC", 1) for _ in range(n)]
    inner = len(code)
    code.append(None)                          # DECJZ r1 -> after inner
    code += [_ins("OUT1"), _ins("JMP", None, inner)]
    after = len(code)
    code[inner] = _ins("DECJZ", 1, after)
    code += [_ins("OUT0"), _ins("JMP", None, outer)]
    end = len(code)
    code[outer] = _ins("DECJZ", 0, end)
    code.append(_ins("HALT"))
    return code


FAMILIES = {"straight": _straight, "loop": _counted_loop, "arith": _arith, "nested": _nested}


def program_corpus(seed: int = 0, n: int = 50, step_budget: int = 1000,
                   max_bits: int | None = None) -> list[Program]:
    """Distinct halting programs cycling through the families."""
    rng = random.Random(seed)
    names = list(FAMILIES)
    out, seen = [], set()
    i = 0
    while len(out) < n:
        fam = FAMILIES[names[i % len(names)]]
        i += 1
        p = _make(fam(rng))
        if p.bits in seen or (max_bits is not None and len(p) > max_bits):
            continue
        res, _ = execute(p, step_budget, 1 << 20)
        if not res.halted:
            continue
        seen.add(p.bits)
        out.append(p)
    return out
