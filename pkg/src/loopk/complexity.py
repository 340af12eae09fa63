"""Anytime upper bounds on network complexity, and the checks built on them.

Every number produced here is an upper bound that comes with a witness.  The
enumerated space (:class:`ArchBounds`) is single-position networks with
``d = d_max`` channels and 1..L_max non-empty :class:`TiedAffine` layers,
plus the empty network; networks are streamed by (W, L, composition of W
over the layers, slot choice, values), which is also the tie-break order.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, islice, product

from .bits import check_bits
from .codec import LENGTH_OFFSET, LENGTH_SLOPE, k_upper_via_codec, length_bound
from .compiler import CapacityConfig, compile_program, run_compiled
from .machine import Program, _map, kt_upper, search_k_upper
from .netvm import Network, TiedAffine, run
from .precision import TERNARY, PrecisionSpec, as_fraction, format_fraction, value_alphabet


@dataclass(frozen=True)
class ArchBounds:
    d_max: int = 3
    L_max: int = 1
    W_max: int = 3
    spec: PrecisionSpec = TERNARY
    step_budget: int = 16
    output_limit: int = 64
    P: int = 1

    def __post_init__(self):
        if self.P != 1:
            raise ValueError("the enumerated space is single-position (P = 1)")
        if self.d_max < 3:
            raise ValueError("d_max must be >= 3 (halt, emit, bit)")
        if self.L_max < 1 or self.W_max < 0 or self.step_budget < 1 or self.output_limit < 1:
            raise ValueError("L_max, step_budget and output_limit must be >= 1, W_max >= 0")

    @property
    def slots(self) -> int:
        return self.d_max * self.d_max + self.d_max

    def row(self) -> dict:
        return {"d_max": self.d_max, "L_max": self.L_max, "W_max": self.W_max,
                "spec": self.spec.name or self.spec.to_text(), "T": self.step_budget,
                "output_limit": self.output_limit}


# ---------------------------------------------------------------------------
# enumeration

def _compositions(total: int, parts: int):
    """Compositions of total into positive parts, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def count_of_weight(b: ArchBounds, W: int) -> int:
    """Closed-form number of networks with exactly W non-zero parameters."""
    if W == 0:
        return 1
    nv = len(value_alphabet(b.spec))
    total = 0
    for L in range(1, min(b.L_max, W) + 1):
        for comp in _compositions(W, L):
            total += math.prod(math.comb(b.slots, w) for w in comp) * nv ** W
    return total


def space_size(b: ArchBounds) -> int:
    return sum(count_of_weight(b, W) for W in range(b.W_max + 1))


def _descriptors(b: ArchBounds, W: int):
    """(composition, slot tuples per layer, values) in canonical order."""
    if W == 0:
        yield (), (), ()
        return
    vals = value_alphabet(b.spec)
    for L in range(1, min(b.L_max, W) + 1):
        for comp in _compositions(W, L):
            for slots in product(*[list(combinations(range(b.slots), w)) for w in comp]):
                for vs in product(vals, repeat=W):
                    yield comp, slots, vs


def _materialize(b: ArchBounds, desc) -> Network:
    comp, slots, vals = desc
    d = b.d_max
    layers = []
    k = 0
    for layer_slots in slots:
        w, bias = [], []
        for s in layer_slots:
            v = vals[k]
            k += 1
            if s < d * d:
                w.append((s // d + 1, s % d + 1, v))
            else:
                bias.append((s - d * d + 1, v))
        layers.append(TiedAffine(w, bias))
    return Network(b.spec, 1, d, tuple(layers))


def enumerate_networks(b: ArchBounds, W: int | None = None):
    """Every network of the space exactly once, by increasing W (or only weight W)."""
    ws = range(b.W_max + 1) if W is None else [W]
    for w in ws:
        for desc in _descriptors(b, w):
            yield _materialize(b, desc)


def _fast_layers(b: ArchBounds, desc):
    """Integer-unit form of a descriptor: per layer {tgt: ([(src, w_units)], bias_units)}."""
    comp, slots, vals = desc
    d = b.d_max
    delta = b.spec.delta
    out = []
    k = 0
    for layer_slots in slots:
        layer = {}
        for s in layer_slots:
            u = int(vals[k] / delta)
            k += 1
            if s < d * d:
                layer.setdefault(s % d, ([], 0))[0].append((s // d, u))
            else:
                t = s - d * d
                terms, _ = layer.get(t, ([], 0))
                layer[t] = (terms, u)
        out.append(tuple((t, tuple(terms), bu) for t, (terms, bu) in sorted(layer.items())))
    return out


def _fast_run(b: ArchBounds, layers):
    """Run a single-position affine network on integer units.

    Same arithmetic as :func:`netvm.run`; returns (halted, output, reason).
    """
    a, den = b.spec.delta.numerator, b.spec.delta.denominator
    cap = int(b.spec.A / b.spec.delta)
    x = [0] * b.d_max
    out = []
    for _ in range(b.step_budget):
        for layer in layers:
            nx = list(x)
            for t, terms, bu in layer:
                z = sum(w * x[s] for s, w in terms) * a + bu * den
                if z <= 0:
                    nx[t] = 0
                else:
                    nx[t] = min((2 * z + den) // (2 * den), cap)
            x = nx
        if x[0] > 0:
            return True, "".join(out), "halted"
        if x[1] > 0:
            if len(out) >= b.output_limit:
                return False, "".join(out), "output-limit"
            out.append("1" if x[2] > 0 else "0")
    return False, "".join(out), "budget-exhausted"


def evaluate(b: ArchBounds, net: Network):
    """Run one network under the bounds' budgets (reference engine)."""
    res = run(net, b.step_budget, b.output_limit)
    return res.halted, res.output, res.reason


def _scan_first(args):
    b, W, shard, jobs, s = args
    for i, desc in islice(enumerate(_descriptors(b, W)), shard, None, jobs):
        halted, out, _ = _fast_run(b, _fast_layers(b, desc))
        if halted and out == s:
            return i
    return None


def _descriptor_at(b: ArchBounds, W: int, index: int):
    return next(islice(_descriptors(b, W), index, None))


@dataclass(frozen=True)
class NUpperResult:
    n_hat: int | None
    witness: Network | None
    index: int | None          # position within the weight-W stream
    certificate: str           # "witness" or "no network in this space"
    bounds: ArchBounds


def n_upper(s: str, b: ArchBounds, jobs: int = 1) -> NUpperResult:
    """First network (canonical order) that halts within T with output exactly s."""
    check_bits(s)
    for W in range(b.W_max + 1):
        hits = _map(_scan_first, [(b, W, k, jobs, s) for k in range(jobs)], jobs)
        hits = [h for h in hits if h is not None]
        if hits:
            i = min(hits)
            return NUpperResult(W, _materialize(b, _descriptor_at(b, W, i)), i, "witness", b)
    return NUpperResult(None, None, None, "no network in this space", b)


def _scan_table(args):
    b, W, shard, jobs = args
    halting = 0
    outputs = defaultdict(int)
    norms = defaultdict(int)  # (output or None, norm2sq) -> count
    n = 0
    for _, desc in islice(enumerate(_descriptors(b, W)), shard, None, jobs):
        n += 1
        halted, out, _ = _fast_run(b, _fast_layers(b, desc))
        key = out if halted else None
        if halted:
            halting += 1
            outputs[out] += 1
        norms[(key, sum(v * v for v in desc[2]))] += 1
    return n, halting, dict(outputs), dict(norms)


def _tables(b: ArchBounds, jobs: int):
    """Per W: merged (count, halting, outputs, norms); merging is order-free."""
    per_w = []
    for W in range(b.W_max + 1):
        parts = _map(_scan_table, [(b, W, k, jobs) for k in range(jobs)], jobs)
        n = sum(p[0] for p in parts)
        halting = sum(p[1] for p in parts)
        outputs, norms = defaultdict(int), defaultdict(int)
        for p in parts:
            for k, v in p[2].items():
                outputs[k] += v
            for k, v in p[3].items():
                norms[k] += v
        per_w.append((W, n, halting, dict(outputs), dict(norms)))
    return per_w


def enumerate_table(b: ArchBounds, jobs: int = 1) -> list[dict]:
    """Per-W summary: closed-form count, enumerated count, halting count, outputs seen."""
    rows = []
    for W, n, halting, outputs, _ in _tables(b, jobs):
        rows.append({"W": W, "closed_form": count_of_weight(b, W), "enumerated": n,
                     "halting": halting, "distinct_outputs": len(outputs),
                     "outputs": " ".join(sorted(outputs, key=lambda o: (len(o), o))) or "-"})
    return rows


# ---------------------------------------------------------------------------
# induced output prior

@dataclass(frozen=True)
class PriorRow:
    s: str | None              # None marks the undefined-mass row
    count: int
    q0: Fraction
    q2: Fraction | None        # None when 2^-||theta||_2^2 is irrational
    k_hat: int | None = None

    @property
    def neg_log2_q0(self) -> float:
        return -math.log2(self.q0) if self.q0 else math.inf

    def row(self) -> dict:
        def pair(q):
            return ("", "") if q is None else (format_fraction(q), f"{float(q):.12g}")
        q0, q0d = pair(self.q0)
        q2, q2d = pair(self.q2)
        return {"s": "<undefined>" if self.s is None else (self.s or "<eps>"), "count": self.count,
                "q0": q0, "q0_decimal": q0d, "q2": q2, "q2_decimal": q2d,
                "neg_log2_q0": f"{self.neg_log2_q0:.12g}",
                "k_hat": "" if self.k_hat is None else self.k_hat}


@dataclass(frozen=True)
class PriorTable:
    rows: list                 # PriorRow per output string, by (len, s)
    undefined: PriorRow
    space_size: int
    z0: Fraction
    z2: Fraction | None
    alpha_hat: float | None    # smallest alpha with 2^-(K^ + alpha) <= Q0 on the table

    def total_q0(self) -> Fraction:
        return sum((r.q0 for r in self.rows), Fraction(0)) + self.undefined.q0


def _pow2_neg(x: Fraction) -> Fraction | None:
    if x.denominator != 1:
        return None
    return Fraction(1, 2 ** int(x))


def prior_estimate(b: ArchBounds, jobs: int = 1, cap: int = 1_000_000,
                   k_anchor_len: int = 0, k_anchor_budget: int = 1000) -> PriorTable:
    """Exhaustive Q0 (2^-W) and Q2 (2^-||theta||_2^2) over the space, normalized on it.

    ``k_anchor_len`` > 0 attaches K^ (RM-4 search up to that length) to each row.
    """
    size = space_size(b)
    if size > cap:
        raise ValueError(f"space has {size} networks, above the cap {cap}")
    tables = _tables(b, jobs)
    m0 = defaultdict(Fraction)
    m2 = defaultdict(Fraction)
    counts = defaultdict(int)
    q2_ok = True
    for W, _, _, _, norms in tables:
        for (key, n2), c in norms.items():
            counts[key] += c
            m0[key] += c * Fraction(1, 2 ** W)
            w2 = _pow2_neg(as_fraction(n2))
            if w2 is None:
                q2_ok = False
            else:
                m2[key] += c * w2
    z0 = sum(m0.values(), Fraction(0))
    z2 = sum(m2.values(), Fraction(0)) if q2_ok else None
    keys = sorted((k for k in counts if k is not None), key=lambda o: (len(o), o))
    rows = []
    for k in keys:
        kh = search_k_upper(k, k_anchor_len, k_anchor_budget).k_hat if k_anchor_len else None
        rows.append(PriorRow(k, counts[k], m0[k] / z0, m2[k] / z2 if q2_ok else None, kh))
    undef = PriorRow(None, counts.get(None, 0), m0.get(None, Fraction(0)) / z0,
                     (m2.get(None, Fraction(0)) / z2) if q2_ok else None)
    gaps = [r.neg_log2_q0 - r.k_hat for r in rows if r.k_hat is not None]
    return PriorTable(rows, undef, size, z0, z2, max(gaps) if gaps else None)


# ---------------------------------------------------------------------------
# generalization penalty

def mdl_penalty(norm2sq, m: int, eta, c_d) -> float:
    """sqrt((c_d * n * log2(max(n, 2)) + log2(1/eta)) / m) for n = ||theta||_2^2."""
    n2 = as_fraction(norm2sq)
    eta = as_fraction(eta)
    c_d = as_fraction(c_d)
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if n2 < 0 or c_d < 0:
        raise ValueError("norm2sq and c_d must be non-negative")
    inner = float(c_d * n2) * math.log2(max(n2, 2)) + math.log2(1 / eta)
    return math.sqrt(inner / m)


# ---------------------------------------------------------------------------
# the sandwich check

@lru_cache(maxsize=None)
def measured_c_d(w_max: int = 4096, c_pi: int = 0) -> Fraction:
    """Smallest c with length_bound(W) + c_pi <= c (W log2 W + 1) on 1..w_max.

    Taken over the declared codec law, so it is exact up to the float in log2.
    """
    best = 0.0
    for W in range(1, w_max + 1):
        best = max(best, (length_bound(W) + c_pi) / (W * math.log2(W) + 1))
    return Fraction(math.ceil(best * 1000), 1000)


@dataclass(frozen=True)
class ComplexityReport:
    s: str
    n_hat: int | None
    n_witness: Network | None = field(repr=False)
    k_hat: int | None
    k_witness: Program | None
    kt_hat: float | None
    c_u_measured: int | None
    c_d_measured: Fraction
    n_via_compile: int | None       # |p*| + c_U
    compile_check: bool | None      # the compiled witness really prints s
    k_via_codec: int | None         # |encode(prune(n*))| + c_pi
    sandwich_ok: dict               # direction -> True / False / None (indeterminate)
    notes: tuple = ()

    def row(self) -> dict:
        def opt(x):
            return "" if x is None else x
        ok = {k: "indeterminate" if v is None else str(v).lower()
              for k, v in self.sandwich_ok.items()}
        return {"s": self.s or "<eps>", "n_hat": opt(self.n_hat), "k_hat": opt(self.k_hat),
                "k_witness": self.k_witness.text() if self.k_witness else "",
                "kt_hat": "" if self.kt_hat is None else f"{self.kt_hat:.6f}",
                "c_u": opt(self.c_u_measured), "c_d": format_fraction(self.c_d_measured),
                "n_via_compile": opt(self.n_via_compile),
                "compile_check": "" if self.compile_check is None else str(self.compile_check).lower(),
                "k_via_codec": opt(self.k_via_codec),
                "n_le_k_plus_cu": ok["n_le_k_plus_cu"], "k_le_cd_nlogn": ok["k_le_cd_nlogn"],
                "codec_le_cd_nlogn": ok["codec_le_cd_nlogn"],
                "notes": "; ".join(self.notes)}


def _nlogn_bound(c_d: Fraction, n: int) -> float:
    return float(c_d) * n * math.log2(n) + float(c_d) if n >= 1 else float(c_d)


def sandwich_verify(s: str, max_len: int = 12, step_budget: int = 1000,
                    bounds: ArchBounds = ArchBounds(), cfg: CapacityConfig = CapacityConfig(),
                    jobs: int = 1, c_pi: int = 0, run_compiled_check: bool = True) -> ComplexityReport:
    """Consistency check of both sandwich directions between upper bounds.

    N^ <= K^ + c_U uses the compiled K^ witness; K^ <= c_d N^ log N^ + c_d and
    the codec length of the N^ witness use the codec-derived c_d.  A direction
    whose inputs are missing is reported as indeterminate.
    """
    check_bits(s)
    notes = []
    k = search_k_upper(s, max_len, step_budget, jobs)
    kt = kt_upper(s, max_len, step_budget, jobs) if k.k_hat is not None else None
    c_u = n_comp = check = None
    if k.witness is None:
        notes.append(f"no RM-4 program of length <= {max_len} prints s")
    elif len(k.witness) > cfg.max_program_bits:
        notes.append("K^ witness exceeds the compiler capacity")
    else:
        _, rep = compile_program(k.witness, cfg)
        c_u = rep.c_u
        n_comp = len(k.witness) + c_u
        if run_compiled_check:
            res = run_compiled(k.witness, cfg)
            check = res.halted and res.output == s
    n = n_upper(s, bounds, jobs)
    k_codec = None
    if n.n_hat is None:
        notes.append("no network in the enumerated space prints s")
    else:
        k_codec = k_upper_via_codec(n.witness, c_pi)
    c_d = measured_c_d(4096, c_pi)
    ok = {"n_le_k_plus_cu": None, "k_le_cd_nlogn": None, "codec_le_cd_nlogn": None}
    if n.n_hat is not None and n_comp is not None:
        ok["n_le_k_plus_cu"] = n.n_hat <= n_comp
    if n.n_hat is not None and k.k_hat is not None:
        ok["k_le_cd_nlogn"] = k.k_hat <= _nlogn_bound(c_d, n.n_hat)
    if k_codec is not None:
        ok["codec_le_cd_nlogn"] = k_codec <= _nlogn_bound(c_d, n.n_hat)
    return ComplexityReport(s, n.n_hat, n.witness, k.k_hat, k.witness,
                            kt.kt_hat if kt else None, c_u, c_d, n_comp, check, k_codec, ok,
                            tuple(notes))


CODEC_LAW = (LENGTH_SLOPE, LENGTH_OFFSET)
