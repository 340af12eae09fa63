"""Compile RM-4 programs into ternary looped networks.

The network has one position per program bit plus one padding position.
Per loop iteration:

1. an iteration-1 gate ``c1 = 1[t == 1]`` (four parameters; ``c2`` doubles
   as the constant 1 from then on);
2. a routing layer: one gated per-position bias per program bit, depositing
   +1/-1 into the program channel at iteration 1;
3. a fixed control circuit.  While parsing it reads one program bit per
   iteration (hard attention on the bit pointer), decodes the Elias-delta
   header, opcodes, registers and addresses, and writes each decoded
   instruction into a table at the position equal to its index (a second
   attention head broadcasts the control row to every position).  Reading
   past the last bit switches to execution, which fetches one table row per
   iteration at the program counter, updates binary registers with
   ripple-carry gadgets and drives halt/emit/bit.

Only the routing layer depends on the program, so the parameter count is
``|p| + c_U`` with ``c_U`` fixed by the :class:`CapacityConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bits import width
from .machine import Program, execute
from .netvm import (BIT, EMIT, HALT, HardAttention, Network, PerPositionBias, RunResult,
                    TiedAffine, nonzero_count, run)
from .precision import TERNARY

GATE_CH = 4    # c1: fires at iteration 1 only
ONE_CH = 5     # c2: saturates at 1, used as the constant one
PROG_CH = 6    # program region, one bit per position


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class CapacityConfig:
    max_program_bits: int = 128
    register_cap: int = 256
    step_cap: int = 1000

    def __post_init__(self):
        if min(self.max_program_bits, self.register_cap, self.step_cap) < 1:
            raise ValueError("capacity values must be positive")
        if self.max_program_bits < 4:
            raise ValueError("max_program_bits must be at least 4 (the shortest program)")
        if self.register_cap < 2 or self.register_cap & (self.register_cap - 1):
            raise ValueError("register_cap must be a power of two >= 2")

    @property
    def positions(self) -> int:
        return self.max_program_bits + 1

    @property
    def addr_bits(self) -> int:
        return width(self.positions)

    @property
    def reg_bits(self) -> int:
        return self.register_cap.bit_length() - 1

    def iteration_budget(self) -> int:
        """Iterations that cover parsing plus ``step_cap`` executed instructions."""
        return self.max_program_bits + self.step_cap + 4


# ---------------------------------------------------------------------------
# circuit builder

@dataclass
class _Assign:
    tgt: int
    terms: dict
    bias: int


@dataclass
class _Attn:
    q: list
    k: list
    v: list
    o: list


class Circuit:
    """Straight-line boolean circuit over ternary threshold gates.

    Every gate is ``tgt := clip(relu(sum w * src + bias))`` with w = +-1;
    larger biases borrow constant-one channels.  ``schedule`` packs the
    assignments into as few layers as the read/write dependencies allow.
    """

    def __init__(self):
        self.names = ["halt", "emit", "bit", "c1", "c2", "prog"]
        self.ops = []
        self.consts = [ONE_CH]
        self._n = {}

    def channel(self, name: str) -> int:
        self.names.append(name)
        return len(self.names)

    def fresh(self, stem: str) -> int:
        k = self._n.get(stem, 0)
        self._n[stem] = k + 1
        return self.channel(f"{stem}.{k}")

    def const(self, k: int) -> int:
        """The k-th constant-one channel (k = 1 is c2)."""
        while len(self.consts) < k:
            c = self.channel(f"one{len(self.consts) + 1}")
            self.consts.append(c)
        return self.consts[k - 1]

    def assign(self, tgt: int, terms: dict, bias: int = 0) -> int:
        terms = {s: w for s, w in terms.items() if w}
        for w in terms.values():
            if w not in (1, -1):
                raise ValueError("the circuit builder only emits ternary weights")
        if abs(bias) > 1:
            sign = 1 if bias > 0 else -1
            for k in range(1, abs(bias)):
                c = self.const(k)
                if c in terms:
                    raise ValueError("constant channel already used in this gate")
                terms[c] = sign
            bias = sign
        self.ops.append(_Assign(tgt, terms, bias))
        return tgt

    def gate(self, stem: str, terms: dict, bias: int = 0) -> int:
        return self.assign(self.fresh(stem), terms, bias)

    # boolean helpers on {0, 1} channels
    def NOT(self, x, stem="not"):
        return self.gate(stem, {x: -1}, 1)

    def AND(self, *xs, stem="and"):
        if len(xs) == 1:
            return self.gate(stem, {xs[0]: 1})
        return self.gate(stem, {x: 1 for x in xs}, -(len(xs) - 1))

    def OR(self, *xs, stem="or"):
        return self.gate(stem, {x: 1 for x in xs})

    def ANDNOT(self, a, b, stem="andnot"):
        return self.gate(stem, {a: 1, b: -1})

    def NOR(self, *xs, stem="nor"):
        return self.gate(stem, {x: -1 for x in xs}, 1)

    def XOR(self, a, b, stem="xor"):
        h1 = self.ANDNOT(a, b, stem)
        h2 = self.ANDNOT(b, a, stem)
        return self.OR(h1, h2, stem=stem)

    def MUX(self, s, a, b, stem="mux"):
        """a if s else b."""
        return self.OR(self.AND(s, a, stem=stem), self.ANDNOT(b, s, stem), stem=stem)

    def copy(self, dst, src):
        return self.assign(dst, {src: 1})

    def clear(self, dst):
        return self.assign(dst, {ONE_CH: -1})

    # multi-bit helpers (LSB first)
    def updown(self, bits, inc=None, dec=None, stem="ctr"):
        """Binary increment/decrement; returns (new bits, carry out of the top)."""
        c, dn = inc, dec
        out = []
        for b in bits:
            parts = [x for x in (c, dn) if x is not None]
            if not parts:
                out.append(b)
                continue
            t = parts[0] if len(parts) == 1 else self.OR(*parts, stem=stem)
            out.append(self.XOR(b, t, stem))
            c = self.AND(c, b, stem=stem) if c is not None else None
            dn = self.ANDNOT(dn, b, stem) if dn is not None else None
        return out, c

    def shift_in(self, bits, en, new_bit, stem="shift"):
        """(bits << 1) | new_bit when en, else bits."""
        out = [self.MUX(en, new_bit, bits[0], stem)]
        for j in range(1, len(bits)):
            out.append(self.MUX(en, bits[j - 1], bits[j], stem))
        return out

    def set_one(self, bits, en, stem="set1"):
        """1 when en, else bits."""
        out = [self.OR(en, bits[0], stem=stem)]
        out += [self.ANDNOT(b, en, stem) for b in bits[1:]]
        return out

    def attention(self, q, k, v, o):
        """Entries name channels, or ``("pos", j)`` for position feature j."""
        self.ops.append(_Attn(q, k, v, o))

    # -------------------------------------------------------------------
    def schedule(self):
        """Pack ops into layers: a layer never reads what it writes earlier."""
        d = len(self.names)

        def ch(c):
            return d + 1 + c[1] if isinstance(c, tuple) else c

        layers = []
        cur, written = None, set()

        def flush():
            nonlocal cur, written
            if cur:
                w = [(ch(s), t, v) for t, terms, _ in cur for s, v in terms.items()]
                b = [(t, bias) for t, _, bias in cur if bias]
                layers.append(TiedAffine(w, b))
            cur, written = None, set()

        for op in self.ops:
            if isinstance(op, _Assign):
                srcs = set(op.terms)
                if cur is not None and (srcs & written or op.tgt in written):
                    flush()
                if cur is None:
                    cur = []
                cur.append((op.tgt, op.terms, op.bias))
                written.add(op.tgt)
            else:
                flush()
                layers.append(HardAttention(
                    [(ch(s), h, w) for s, h, w in op.q], [(ch(s), h, w) for s, h, w in op.k],
                    [(ch(s), h, w) for s, h, w in op.v], [(h, ch(t), w) for h, t, w in op.o]))
        flush()
        return layers


# ---------------------------------------------------------------------------
# the RM-4 control circuit

def _control_circuit(cfg: CapacityConfig) -> Circuit:
    K = cfg.addr_bits
    KR = cfg.reg_bits
    c = Circuit()
    one = ONE_CH

    def reg(stem, n):
        return [c.channel(f"{stem}[{j}]") for j in range(n)]

    # persistent state, row 1 unless noted
    EX = c.channel("EX")
    HDR = c.channel("HDR")
    PEND = c.channel("PEND")
    FAULT = c.channel("FAULT")
    st = {s: c.channel(f"s{s}") for s in ("Z", "N", "R", "O1", "O2", "O3", "G1", "G2")}
    C = reg("C", K)
    RG = reg("RG", K)
    V = reg("V", K)
    OP = reg("OP", 3)      # LSB first: OP[2] is the first opcode bit read
    REG = reg("REG", 2)
    ADDR = reg("ADDR", K)
    ICNT = reg("ICNT", K)
    PTR = reg("PTR", K)
    R = [reg(f"r{i}", KR) for i in range(4)]
    # per-position instruction table
    T_OP, T_REG, T_ADDR = reg("T_OP", 3), reg("T_REG", 2), reg("T_ADDR", K)
    T_VALID = c.channel("T_VALID")
    # attention landing channels, cleared at the end of every iteration
    F = c.channel("F")
    FT_OP, FT_REG, FT_ADDR = reg("FT_OP", 3), reg("FT_REG", 2), reg("FT_ADDR", K)
    FT_VALID = c.channel("FT_VALID")
    BC_OP, BC_REG, BC_ADDR = reg("BC_OP", 3), reg("BC_REG", 2), reg("BC_ADDR", K)
    BC_ICNT = reg("BC_ICNT", K)
    BC_PEND = c.channel("BC_PEND")
    scratch = [F, *FT_OP, *FT_REG, *FT_ADDR, FT_VALID, *BC_OP, *BC_REG, *BC_ADDR, *BC_ICNT, BC_PEND]

    # iteration-1 gate: c1 := relu(1 - c2), c2 := clip(c2 + 1)
    c.assign(GATE_CH, {ONE_CH: -1}, 1)
    c.assign(ONE_CH, {ONE_CH: 1}, 1)
    c.ops.append("ROUTING")

    eZ = c.OR(st["Z"], GATE_CH, stem="eZ")
    eHDR = c.OR(HDR, GATE_CH, stem="eHDR")
    PA = c.NOT(EX, stem="PA")

    # --- table write: every position attends to position 1 ---------------
    fields = list(zip(OP + REG + ADDR, BC_OP + BC_REG + BC_ADDR))
    copy_src = [s for s, _ in fields] + ICNT + [PEND]
    copy_dst = [t for _, t in fields] + BC_ICNT + [BC_PEND]
    c.attention(q=[(one, j + 1, -1) for j in range(K)],
                k=[(("pos", j), j + 1, 1) for j in range(K)],
                v=[(s, i + 1, 1) for i, s in enumerate(copy_src)],
                o=[(i + 1, t, 1) for i, t in enumerate(copy_dst)])
    posbit = [c.gate("posbit", {("pos", j): 1}) for j in range(K)]
    eq = []
    for j in range(K):
        x1 = c.ANDNOT(BC_ICNT[j], posbit[j], "eq")
        x2 = c.ANDNOT(posbit[j], BC_ICNT[j], "eq")
        eq.append(c.NOR(x1, x2, stem="eq"))
    WR = c.AND(BC_PEND, *eq, stem="WR")
    for tf, (_, bc) in zip(T_OP + T_REG + T_ADDR, fields):
        h = c.AND(WR, bc, stem="wr")
        c.assign(tf, {tf: 1, h: 1})
    c.assign(T_VALID, {T_VALID: 1, WR: 1})
    ICNT_new, _ = c.updown(ICNT, inc=PEND, stem="icnt")

    # --- fetch: attend to the position addressed by PTR --------------------
    NPTR = [c.NOT(b, stem="nptr") for b in PTR]
    q = [(PTR[j], j + 1, 1) for j in range(K)] + [(NPTR[j], j + 1, -1) for j in range(K)]
    fetch_src = [PROG_CH] + T_OP + T_REG + T_ADDR + [T_VALID]
    fetch_dst = [F] + FT_OP + FT_REG + FT_ADDR + [FT_VALID]
    c.attention(q=q, k=[(("pos", j), j + 1, 1) for j in range(K)],
                v=[(s, i + 1, 1) for i, s in enumerate(fetch_src)],
                o=[(i + 1, t, 1) for i, t in enumerate(fetch_dst)])
    b1 = c.gate("b1", {F: 1})
    b0 = c.gate("b0", {F: -1})
    end = c.NOR(b1, b0, stem="end")

    # --- parse phase -------------------------------------------------------
    act = c.ANDNOT(PA, end, "act")
    finish = c.AND(PA, end, stem="finish")
    aZ = c.AND(act, eZ, stem="aZ")
    aN = c.AND(act, st["N"], stem="aN")
    aR = c.AND(act, st["R"], stem="aR")
    aO1 = c.AND(act, st["O1"], stem="aO1")
    aO2 = c.AND(act, st["O2"], stem="aO2")
    aO3 = c.AND(act, st["O3"], stem="aO3")
    aG1 = c.AND(act, st["G1"], stem="aG1")
    aG2 = c.AND(act, st["G2"], stem="aG2")

    # Elias-delta: count leading zeros in C, read N into RG, then N-1 bits into V
    z0 = c.AND(aZ, b0, stem="z0")
    z1 = c.AND(aZ, b1, stem="z1")
    Cz = c.NOR(*C, stem="Cz")
    zdone = c.AND(z1, Cz, stem="zdone")
    zgoN = c.ANDNOT(z1, Cz, "zgoN")
    C_new, _ = c.updown(C, inc=z0, dec=aN, stem="C")
    nC0 = c.NOR(*C_new, stem="nC0")
    nGoR = c.AND(aN, nC0, stem="nGoR")
    nStay = c.ANDNOT(aN, nC0, "nStay")
    RG1 = c.shift_in(RG, aN, b1, "RGs")
    RG2, _ = c.updown(RG1, dec=aR, stem="RGd")
    RG_new = c.set_one(RG2, zgoN, "RG1")
    RGis1 = c.AND(RG2[0], *[c.NOT(b, stem="rgn") for b in RG2[1:]], stem="RGis1") \
        if K > 1 else c.gate("RGis1", {RG2[0]: 1})
    rdone = c.AND(aR, RGis1, stem="rdone")
    rStay = c.ANDNOT(aR, RGis1, "rStay")
    V1 = c.shift_in(V, aR, b1, "Vs")
    V_new = c.set_one(V1, c.OR(zdone, nGoR, stem="vset"), "V1")
    edone = c.OR(zdone, rdone, stem="edone")
    edone_addr = c.ANDNOT(edone, eHDR, "edone_addr")
    Vm1, _ = c.updown(V_new, dec=c.gate("always", {one: 1}), stem="Vm1")
    ADDR_new = [c.MUX(edone_addr, a, b, "addr") for a, b in zip(Vm1, ADDR)]

    # opcode and register shift registers
    aO = c.OR(aO1, aO2, aO3, stem="aO")
    OP_new = c.shift_in(OP, aO, b1, "OPs")
    # after the third opcode bit: o2 = OP[1], o1 = OP[0], o0 = b1 (old values)
    o2, o1, o0 = OP[1], OP[0], b1
    is_noarg = c.ANDNOT(c.NOT(o2, stem="dec"), c.AND(o1, o0, stem="dec"), "dec")
    is_bad = c.AND(o2, o1, stem="dec")
    is_inc = c.AND(c.NOT(o2, stem="dec"), o1, o0, stem="dec")
    is_decjz = c.AND(o2, c.NOR(o1, o0, stem="dec"), stem="dec")
    is_jmp = c.AND(o2, c.ANDNOT(o0, o1, "dec"), stem="dec")
    a3_done = c.AND(aO3, c.OR(is_noarg, is_bad, stem="dec"), stem="a3done")
    a3_reg = c.AND(aO3, c.OR(is_inc, is_decjz, stem="dec"), stem="a3reg")
    a3_jmp = c.AND(aO3, is_jmp, stem="a3jmp")
    REG_new = c.shift_in(REG, c.OR(aG1, aG2, stem="aG"), b1, "REGs")
    g2_inc = c.ANDNOT(aG2, OP[2], "g2inc")
    g2_dec = c.AND(aG2, OP[2], stem="g2dec")
    complete = c.OR(a3_done, g2_inc, edone_addr, stem="complete")

    nxt = {
        "Z": c.OR(z0, a3_jmp, g2_dec, stem="nZ"),
        "N": c.OR(zgoN, nStay, stem="nN"),
        "R": c.OR(nGoR, rStay, stem="nR"),
        "O1": c.OR(a3_done, g2_inc, edone, stem="nO1"),
        "O2": c.gate("nO2", {aO1: 1}),
        "O3": c.gate("nO3", {aO2: 1}),
        "G1": c.gate("nG1", {a3_reg: 1}),
        "G2": c.gate("nG2", {aG1: 1}),
    }
    HDR_new = c.ANDNOT(eHDR, edone, "nHDR")
    EX_new = c.OR(EX, finish, stem="nEX")

    # --- execute phase -----------------------------------------------------
    v = FT_VALID
    f0, f1, f2 = FT_OP
    n0, n1, n2 = (c.NOT(x, stem="xn") for x in FT_OP)
    xv = c.AND(EX, v, stem="xv")
    x_halt = c.AND(xv, n2, n1, n0, stem="xHALT")
    x_out0 = c.AND(xv, n2, n1, f0, stem="xOUT0")
    x_out1 = c.AND(xv, n2, f1, n0, stem="xOUT1")
    x_inc = c.AND(xv, n2, f1, f0, stem="xINC")
    x_dec = c.AND(xv, f2, n1, n0, stem="xDECJZ")
    x_jmp = c.AND(xv, f2, n1, f0, stem="xJMP")
    x_bad = c.AND(xv, f2, f1, stem="xBAD")
    x_off = c.ANDNOT(EX, v, "xOFF")
    r0, r1 = FT_REG
    nr1, nr0 = c.NOT(r1, stem="xr"), c.NOT(r0, stem="xr")
    sel = [c.AND(*lits, stem=f"sel{i}") for i, lits in
           enumerate([(nr1, nr0), (nr1, r0), (r1, nr0), (r1, r0)])]
    zero = [c.NOR(*R[i], stem=f"z{i}") for i in range(4)]
    zsel = c.OR(*[c.AND(sel[i], zero[i], stem="zs") for i in range(4)], stem="zsel")
    jump = c.OR(x_jmp, c.AND(x_dec, zsel, stem="jz"), stem="jump")
    R_new, overflow = [], []
    for i in range(4):
        inc_i = c.AND(x_inc, sel[i], stem=f"inc{i}")
        dec_i = c.ANDNOT(c.AND(x_dec, sel[i], stem=f"dec{i}"), zero[i], f"dec{i}")
        bits, carry = c.updown(R[i], inc=inc_i, dec=dec_i, stem=f"r{i}")
        R_new.append(bits)
        overflow.append(carry)
    FAULT_new = c.OR(FAULT, *overflow, stem="nFAULT")

    # --- pointer / program counter ----------------------------------------
    incE = c.OR(act, c.ANDNOT(EX, jump, "ptr"), stem="ptr")
    load = c.AND(EX, jump, stem="load")
    PTR_inc, _ = c.updown(PTR, inc=incE, stem="ptr")
    off = c.OR(load, finish, stem="ptr")
    PTR_new = [c.OR(c.AND(load, a, stem="ptr"), c.ANDNOT(p, off, "ptr"), stem="ptr")
               for a, p in zip(FT_ADDR, PTR_inc)]

    # --- outputs -----------------------------------------------------------
    c.assign(HALT, {x_halt: 1, x_bad: 1, x_off: 1, FAULT_new: 1})
    c.assign(EMIT, {x_out0: 1, x_out1: 1})
    c.assign(BIT, {x_out1: 1})

    # --- commit ------------------------------------------------------------
    for s in scratch:
        c.clear(s)
    commits = [(EX, EX_new), (HDR, HDR_new), (PEND, complete), (FAULT, FAULT_new)]
    commits += [(st[k], nxt[k]) for k in st]
    for dst, src in zip(C + RG + V + OP + REG + ADDR + ICNT + PTR,
                        C_new + RG_new + V_new + OP_new + REG_new + ADDR_new + ICNT_new + PTR_new):
        commits.append((dst, src))
    for i in range(4):
        commits += list(zip(R[i], R_new[i]))
    for dst, src in commits:
        if dst != src:
            c.copy(dst, src)
    # constant-one channels borrowed by wide gates are refreshed in layer 1
    c.ops[:0] = [_Assign(k, {}, 1) for k in c.consts[1:]]
    return c


@dataclass
class _Built:
    layers: list           # control layers (gate layer first, routing slot marked)
    routing_at: int
    d: int
    names: list


_CACHE: dict = {}


def _build(cfg: CapacityConfig) -> _Built:
    if cfg in _CACHE:
        return _CACHE[cfg]
    c = _control_circuit(cfg)
    i = c.ops.index("ROUTING")
    head, tail = c.ops[:i], c.ops[i + 1:]
    c.ops = head
    first = c.schedule()
    c.ops = tail
    rest = c.schedule()
    built = _Built(first + rest, len(first), len(c.names), list(c.names))
    _CACHE[cfg] = built
    return built


# ---------------------------------------------------------------------------
# public operations

@dataclass(frozen=True)
class CompileReport:
    program_bits: int
    routing_count: int
    gate_count: int
    control_count: int
    total: int
    P: int
    d: int
    layers: int
    channels: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def c_u(self) -> int:
        return self.total - self.routing_count

    def row(self) -> dict:
        return {"program_bits": self.program_bits, "routing_count": self.routing_count,
                "gate_count": self.gate_count, "control_count": self.control_count,
                "total": self.total, "c_u": self.c_u, "P": self.P, "d": self.d,
                "layers": self.layers}


def build_gate() -> Network:
    """The two-channel iteration-1 indicator alone (c1 = channel 4, c2 = channel 5)."""
    layer = TiedAffine([(ONE_CH, GATE_CH, -1), (ONE_CH, ONE_CH, 1)],
                       [(GATE_CH, 1), (ONE_CH, 1)])
    return Network(TERNARY, 1, 5, (layer,))


def build_routing(p: Program, cfg: CapacityConfig) -> PerPositionBias:
    if len(p) > cfg.max_program_bits:
        raise CapacityError(f"program has {len(p)} bits; config allows {cfg.max_program_bits}")
    return PerPositionBias([(i, GATE_CH, PROG_CH, 1 if b == "1" else -1)
                            for i, b in enumerate(p.bits, start=1)])


def build_control(cfg: CapacityConfig) -> Network:
    """The program-independent part: every layer except the gate and routing."""
    b = _build(cfg)
    first = b.layers[0]
    gate_free = TiedAffine([w for w in first.weights if w[1] not in (GATE_CH, ONE_CH)],
                           [x for x in first.biases if x[0] not in (GATE_CH, ONE_CH)])
    layers = ([gate_free] if gate_free.count() else []) + b.layers[1:]
    return Network(TERNARY, cfg.positions, b.d, tuple(layers))


def channel_map(cfg: CapacityConfig) -> dict:
    return {name: i for i, name in enumerate(_build(cfg).names, start=1)}


def compile_program(p: Program, cfg: CapacityConfig = CapacityConfig()):
    """Return ``(network, CompileReport)`` for program ``p``."""
    routing = build_routing(p, cfg)
    b = _build(cfg)
    layers = b.layers[:b.routing_at] + [routing] + b.layers[b.routing_at:]
    net = Network(TERNARY, cfg.positions, b.d, tuple(layers))
    total = nonzero_count(net)
    gate = nonzero_count(build_gate())
    report = CompileReport(len(p), routing.count(), gate, total - routing.count() - gate,
                           total, cfg.positions, b.d, len(layers), channel_map(cfg))
    return net, report


REASON_FAULT = "register-overflow"


def run_compiled(p: Program, cfg: CapacityConfig = CapacityConfig(),
                 output_limit: int = 1 << 20) -> RunResult:
    """Compile and run; a halt caused by the fault channel gets its own reason."""
    net, _ = compile_program(p, cfg)
    res = run(net, cfg.iteration_budget(), output_limit)
    fault = channel_map(cfg)["FAULT"]
    if res.halted and res.state.units[0, fault - 1] > 0:
        return RunResult(res.output, True, res.iterations, REASON_FAULT, res.state)
    return res


def overhead_bound(cfg: CapacityConfig) -> int:
    """rho with iterations <= rho * steps for every in-budget program.

    Parsing takes |p| + 1 iterations and each instruction one more, plus at
    most one trailing iteration for the implicit halt.
    """
    return cfg.max_program_bits + 3


def decoded_trace(p: Program, cfg: CapacityConfig = CapacityConfig(), iterations: int = 0):
    """(iteration, pc, opcode) for every execute-phase iteration, read off the
    decoder channels of position 1."""
    net, rep = compile_program(p, cfg)
    ch = rep.channels
    ops = [(name, ch[f"x{name}.0"]) for name in ("HALT", "OUT0", "OUT1", "INC", "DECJZ", "JMP")]
    ptr = [ch[f"PTR[{j}]"] for j in range(cfg.addr_bits)]
    ex = ch["EX"]
    rows = []
    state = {"pc": None}

    def hook(t, x):
        row = x[0]
        if state["pc"] is not None:
            op = next((n for n, c in ops if row[c - 1] > 0), None)
            rows.append((t, state["pc"], op))
        # PTR and EX are committed values, so they describe the next iteration
        state["pc"] = sum(1 << j for j, c in enumerate(ptr) if row[c - 1] > 0) \
            if row[ex - 1] > 0 else None

    run(net, iterations or cfg.iteration_budget(), trace=hook)
    return rows


def fits(p: Program, cfg: CapacityConfig) -> bool:
    """True if the interpreter run of p stays inside cfg's register and step caps."""
    if len(p) > cfg.max_program_bits:
        return False
    res, state = execute(p, cfg.step_cap, 1 << 20)
    return res.halted and state.max_register < cfg.register_cap
