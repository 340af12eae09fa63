"""RM-4: the reference machine every K upper bound in this package refers to.

Four unbounded registers r0..r3, a program counter and an output tape.

    HALT          000
    OUT0          001
    OUT1          010
    INC r         011 rr
    DECJZ r a     100 rr delta(a+1)      decrement r, or jump to a if r == 0
    JMP a         101 delta(a+1)

A program is ``delta(n)`` followed by ``n`` instructions, so the program set
is prefix-free.  Running off the end of the program halts.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

from .bits import BitReader, ParseError, check_bits, elias_delta, pack_bits, unpack_bits
from .netvm import REASON_BUDGET, REASON_HALTED, REASON_OUTPUT, RunResult

OPCODES = {"HALT": 0, "OUT0": 1, "OUT1": 2, "INC": 3, "DECJZ": 4, "JMP": 5}
MNEMONICS = {v: k for k, v in OPCODES.items()}
N_REGISTERS = 4


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    op: str
    reg: int | None = None
    addr: int | None = None

    def text(self) -> str:
        parts = [self.op]
        if self.reg is not None:
            parts.append(f"r{self.reg}")
        if self.addr is not None:
            parts.append(str(self.addr))
        return " ".join(parts)

    def bits(self) -> str:
        out = format(OPCODES[self.op], "03b")
        if self.reg is not None:
            out += format(self.reg, "02b")
        if self.addr is not None:
            out += elias_delta(self.addr + 1)
        return out


@dataclass(frozen=True)
class Program:
    bits: str
    instructions: tuple

    def __len__(self):
        return len(self.bits)

    def text(self) -> str:
        return disassemble(self)

    def hex(self) -> str:
        return "rm4:" + pack_bits(self.bits).hex()


def _make(instrs) -> Program:
    instrs = tuple(instrs)
    if not instrs:
        raise AssemblyError("a program needs at least one instruction")
    for i, ins in enumerate(instrs):
        if ins.op not in OPCODES:
            raise AssemblyError(f"unknown mnemonic {ins.op!r}")
        if ins.addr is not None and not 0 <= ins.addr < len(instrs):
            raise AssemblyError(f"instruction {i}: address {ins.addr} out of range "
                                f"[0, {len(instrs) - 1}]")
        if ins.reg is not None and not 0 <= ins.reg < N_REGISTERS:
            raise AssemblyError(f"instruction {i}: register r{ins.reg} does not exist")
    bits = elias_delta(len(instrs)) + "".join(ins.bits() for ins in instrs)
    return Program(bits, instrs)


_ARITY = {"HALT": "", "OUT0": "", "OUT1": "", "INC": "r", "DECJZ": "ra", "JMP": "a"}
_REG = re.compile(r"r([0-9]+)$", re.IGNORECASE)


def assemble(text: str) -> Program:
    """Assemble mnemonics separated by whitespace, ``;`` or newlines."""
    text = "\n".join(line.split("#", 1)[0] for line in text.splitlines())
    toks = text.replace(";", " ").replace(",", " ").split()
    instrs = []
    i = 0
    while i < len(toks):
        op = toks[i].upper()
        i += 1
        if op not in _ARITY:
            raise AssemblyError(f"unknown mnemonic {toks[i - 1]!r}")
        reg = addr = None
        for kind in _ARITY[op]:
            if i >= len(toks):
                raise AssemblyError(f"{op} is missing an operand")
            tok = toks[i]
            i += 1
            if kind == "r":
                m = _REG.match(tok)
                if not m:
                    raise AssemblyError(f"{op}: expected a register, got {tok!r}")
                reg = int(m.group(1))
            else:
                if not tok.isdigit():
                    raise AssemblyError(f"{op}: expected an address, got {tok!r}")
                addr = int(tok)
        instrs.append(Instruction(op, reg, addr))
    return _make(instrs)


def disassemble(p: Program) -> str:
    return "; ".join(ins.text() for ins in p.instructions)


def parse_program(bits: str, allow_padding: bool = False) -> Program:
    """Decode the binary program format; the whole input must be consumed."""
    check_bits(bits)
    r = BitReader(bits)
    n = r.read_delta("instruction count")
    instrs = []
    for i in range(n):
        start = r.pos
        code = r.read(3, f"opcode[{i}]")
        if code not in MNEMONICS:
            raise ParseError(f"invalid opcode {code:03b}", start, f"opcode[{i}]")
        op = MNEMONICS[code]
        reg = r.read(2, f"register[{i}]") if "r" in _ARITY[op] else None
        addr = None
        if "a" in _ARITY[op]:
            at = r.pos
            addr = r.read_delta(f"address[{i}]") - 1
            if addr >= n:
                raise ParseError(f"address {addr} out of range", at, f"address[{i}]")
        instrs.append(Instruction(op, reg, addr))
    rest = bits[r.pos:]
    if rest and not (allow_padding and len(rest) < 8 and "1" not in rest):
        raise ParseError("trailing bits after program", r.pos, "program")
    return Program(bits[:r.pos], tuple(instrs))


def load_program(text: str) -> Program:
    """Accept assembly text, an ``rm4:<hex>`` string or a raw bitstring."""
    t = text.strip()
    if t.startswith("rm4:"):
        data = bytes.fromhex(t[4:])
        return parse_program(unpack_bits(data, 8 * len(data)), allow_padding=True)
    if t and set(t) <= {"0", "1"}:
        return parse_program(t)
    return assemble(t)


# ---------------------------------------------------------------------------
# interpretation

@dataclass
class MachineState:
    pc: int
    registers: list
    emitted: str
    steps: int
    max_register: int = 0


def execute(p: Program, step_budget: int, output_limit: int, target: str | None = None):
    """Run ``p`` and return ``(RunResult, MachineState)``.

    With ``target`` set, execution stops early (reason ``mismatch``) as soon as
    the output stops being a prefix of ``target``; the search uses this.
    """
    if step_budget < 1 or output_limit < 1:
        raise ValueError("budgets must be >= 1")
    code = _compiled(p)
    n = len(code)
    regs = [0, 0, 0, 0]
    out = []
    pc = steps = peak = 0
    reason = None
    while True:
        if pc >= n:
            reason = REASON_HALTED
            break
        if steps >= step_budget:
            reason = REASON_BUDGET
            break
        op, r, a = code[pc]
        steps += 1
        if op == 0:
            reason = REASON_HALTED
            break
        if op <= 2:
            if len(out) >= output_limit:
                reason = REASON_OUTPUT
                break
            b = "1" if op == 2 else "0"
            if target is not None and (len(out) >= len(target) or target[len(out)] != b):
                out.append(b)
                reason = "mismatch"
                break
            out.append(b)
            pc += 1
        elif op == 3:
            regs[r] += 1
            if regs[r] > peak:
                peak = regs[r]
            pc += 1
        elif op == 4:
            if regs[r]:
                regs[r] -= 1
                pc += 1
            else:
                pc = a
        else:
            pc = a
    res = RunResult("".join(out), reason == REASON_HALTED, steps, reason)
    return res, MachineState(pc, regs, res.output, steps, peak)


@lru_cache(maxsize=4096)
def _compiled(p: Program):
    return tuple((OPCODES[i.op], i.reg, i.addr) for i in p.instructions)


def interpret(p: Program, step_budget: int = 1000, output_limit: int = 1 << 20) -> RunResult:
    return execute(p, step_budget, output_limit)[0]


# ---------------------------------------------------------------------------
# enumeration and search

@lru_cache(maxsize=None)
def _instruction_codes(n: int) -> tuple:
    """All encodings of one instruction inside an n-instruction program."""
    out = [Instruction(op) for op in ("HALT", "OUT0", "OUT1")]
    out += [Instruction("INC", r) for r in range(N_REGISTERS)]
    out += [Instruction("DECJZ", r, a) for r in range(N_REGISTERS) for a in range(n)]
    out += [Instruction("JMP", None, a) for a in range(n)]
    return tuple((ins.bits(), ins) for ins in out)


def _sequences(n: int, k: int, budget: int):
    """Sequences of k instructions (inside an n-instruction program) totalling ``budget`` bits."""
    if k == 0:
        if budget == 0:
            yield "", ()
        return
    for bits, ins in _instruction_codes(n):
        rest = budget - len(bits)
        if rest < 3 * (k - 1):
            continue
        for tail_bits, tail in _sequences(n, k - 1, rest):
            yield bits + tail_bits, (ins,) + tail


@lru_cache(maxsize=64)
def programs_of_length(length: int) -> tuple:
    """Every well-formed program of exactly ``length`` bits, in lexicographic order."""
    progs = []
    n = 1
    while len(elias_delta(n)) + 3 * n <= length:
        head = elias_delta(n)
        for bits, instrs in _sequences(n, n, length - len(head)):
            progs.append(Program(head + bits, instrs))
        n += 1
    progs.sort(key=lambda p: p.bits)
    return tuple(progs)


def enumerate_programs(max_len: int):
    """Length-lex stream of all well-formed programs with |p| <= max_len."""
    for length in range(1, max_len + 1):
        yield from programs_of_length(length)


def _scan(args):
    length, shard, jobs, s, step_budget = args
    progs = programs_of_length(length)
    for i in range(shard, len(progs), jobs):
        res, _ = execute(progs[i], step_budget, len(s) + 1, target=s)
        if res.halted and res.output == s:
            return i
    return None


def _map(fn, tasks, jobs):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


@dataclass(frozen=True)
class KSearchResult:
    k_hat: int | None
    witness: Program | None
    max_len: int
    step_budget: int


def search_k_upper(s: str, max_len: int, step_budget: int, jobs: int = 1) -> KSearchResult:
    """Shortest, then lex-least, program of length <= max_len printing exactly s."""
    check_bits(s)
    for length in range(1, max_len + 1):
        hits = _map(_scan, [(length, k, jobs, s, step_budget) for k in range(jobs)], jobs)
        hits = [h for h in hits if h is not None]
        if hits:
            p = programs_of_length(length)[min(hits)]
            return KSearchResult(length, p, max_len, step_budget)
    return KSearchResult(None, None, max_len, step_budget)


def _scan_kt(args):
    length, shard, jobs, s, step_budget = args
    best = None
    progs = programs_of_length(length)
    for i in range(shard, len(progs), jobs):
        res, _ = execute(progs[i], step_budget, len(s) + 1, target=s)
        if res.halted and res.output == s:
            steps = max(res.iterations, 1)
            if best is None or steps < best[0]:
                best = (steps, i)
    return best


@dataclass(frozen=True)
class KtSearchResult:
    kt_hat: float | None
    length: int | None
    steps: int | None
    witness: Program | None


def kt_upper(s: str, max_len: int, step_budget: int, jobs: int = 1) -> KtSearchResult:
    """Minimise |p| + log2(steps) over programs printing s; steps >= 1."""
    check_bits(s)
    best = None  # (2^|p| * steps, length, index, steps)
    for length in range(1, max_len + 1):
        if best is not None and length >= best[1] + math.log2(best[3]):
            break
        found = _map(_scan_kt, [(length, k, jobs, s, step_budget) for k in range(jobs)], jobs)
        found = [f for f in found if f is not None]
        if not found:
            continue
        steps, idx = min(found)
        key = (steps << length, length, idx, steps)
        if best is None or key[0] < best[0]:
            best = key
    if best is None:
        return KtSearchResult(None, None, None, None)
    _, length, idx, steps = best
    p = programs_of_length(length)[idx]
    return KtSearchResult(length + math.log2(steps), length, steps, p)
