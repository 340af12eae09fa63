"""Looped fixed-precision network virtual machine.

A network is a block of layers applied repeatedly to a ``P x d`` state that
starts at zero.  Channels and positions are 1-based in every external
surface.  Position 1 is the control row; its channels 1, 2 and 3 are the
halt, emit and bit channels.

Layer kinds
-----------
``TiedAffine``
    Every channel that is the target of at least one weight or bias is
    recomputed as ``clip(round(relu(sum w*x_src + b)))``; every other channel
    passes through.  The same weights apply at every position.
``HardAttention``
    One head.  Each position attends to the position with the highest
    query/key score (lowest index on ties) and adds ``O @ V @ x`` of that
    position to its own state.
``PerPositionBias``
    Entries ``(pos, gate, ch, value)`` add ``value`` (``gate == 0``) or
    ``value * x[pos, gate]`` to ``x[pos, ch]``.

Beyond the ``d`` stored channels, sources may name ``ceil(log2 P)`` read-only
position features (channels ``d+1 ...``): feature ``j`` at position ``q`` is
``+delta`` if bit ``j`` of ``q-1`` is set and ``-delta`` otherwise.  They are
part of the architecture and carry no parameters.

All arithmetic is on integers counting multiples of delta; rounding is
half-away-from-zero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .bits import width
from .precision import PrecisionSpec, as_fraction, format_fraction, parse_spec

HALT, EMIT, BIT = 1, 2, 3


def _vals(entries, arity):
    out = []
    for e in entries:
        e = tuple(e)
        if len(e) != arity + 1:
            raise ValueError(f"entry {e} should have {arity} coordinates and a value")
        out.append(tuple(int(c) for c in e[:arity]) + (as_fraction(e[arity]),))
    return tuple(sorted(out))


@dataclass(frozen=True)
class TiedAffine:
    weights: tuple = ()  # (src, tgt, value)
    biases: tuple = ()   # (ch, value)

    kind = "affine"

    def __post_init__(self):
        object.__setattr__(self, "weights", _vals(self.weights, 2))
        object.__setattr__(self, "biases", _vals(self.biases, 1))

    def count(self) -> int:
        return len(self.weights) + len(self.biases)

    def values(self):
        return [e[-1] for e in self.weights] + [e[-1] for e in self.biases]


@dataclass(frozen=True)
class HardAttention:
    query: tuple = ()   # (src channel, head dim, value)
    key: tuple = ()     # (src channel, head dim, value)
    value: tuple = ()   # (src channel, value dim, value)
    output: tuple = ()  # (value dim, tgt channel, value)

    kind = "attn"

    def __post_init__(self):
        for name in ("query", "key", "value", "output"):
            object.__setattr__(self, name, _vals(getattr(self, name), 2))

    def count(self) -> int:
        return len(self.query) + len(self.key) + len(self.value) + len(self.output)

    def values(self):
        return [e[-1] for m in (self.query, self.key, self.value, self.output) for e in m]


@dataclass(frozen=True)
class PerPositionBias:
    entries: tuple = ()  # (pos, gate, ch, value); gate 0 means ungated

    kind = "posbias"

    def __post_init__(self):
        object.__setattr__(self, "entries", _vals(self.entries, 3))

    def count(self) -> int:
        return len(self.entries)

    def values(self):
        return [e[-1] for e in self.entries]


LAYER_KINDS = (TiedAffine, HardAttention, PerPositionBias)


@dataclass(frozen=True)
class Network:
    spec: PrecisionSpec
    P: int
    d: int
    layers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def npos(self) -> int:
        """Number of read-only position-feature channels."""
        return width(self.P)

    @property
    def n_sources(self) -> int:
        return self.d + self.npos

    def parameters(self) -> list[Fraction]:
        return [v for layer in self.layers for v in layer.values()]

    @cached_property
    def _engine(self):
        return _Engine(self)

    def zero_state(self) -> "State":
        return self._engine.zero()


def nonzero_count(net: Network) -> int:
    """Tied weights count once; per-position entries count individually."""
    return sum(layer.count() for layer in net.layers)


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    layer: int | None
    coordinate: tuple | None
    rule: str

    def __str__(self):
        where = "network" if self.layer is None else f"layer {self.layer}"
        if self.coordinate is not None:
            where += f" at {self.coordinate}"
        return f"{where}: {self.rule}"


def validate(net: Network) -> list[Violation]:
    out = []
    spec = net.spec
    if net.P < 1:
        out.append(Violation(None, None, "P must be >= 1"))
    if net.d < 3:
        out.append(Violation(None, None, "d must be >= 3"))
    nsrc = net.n_sources
    dim_cap = max(net.d * net.P, 1)

    def check(li, coord, value, ranges, label=None):
        label = coord if label is None else label
        if value == 0:
            out.append(Violation(li, label, "explicit zero in sparse list"))
        elif not spec.contains(value):
            out.append(Violation(li, label, f"value {value} outside the alphabet"))
        for c, (lo, hi, what) in zip(coord, ranges):
            if not lo <= c <= hi:
                out.append(Violation(li, label, f"{what} {c} outside [{lo}, {hi}]"))

    def dupes(li, coords, what):
        seen = set()
        for c in coords:
            if c in seen:
                out.append(Violation(li, c, f"duplicate {what} coordinate"))
            seen.add(c)

    for li, layer in enumerate(net.layers, start=1):
        if isinstance(layer, TiedAffine):
            for s, t, v in layer.weights:
                check(li, (s, t), v, [(1, nsrc, "source"), (1, net.d, "target")])
            for c, v in layer.biases:
                check(li, (c,), v, [(1, net.d, "channel")])
            dupes(li, [(s, t) for s, t, _ in layer.weights], "weight")
            dupes(li, [(c,) for c, _ in layer.biases], "bias")
        elif isinstance(layer, HardAttention):
            for name, m, rs in (
                ("query", layer.query, [(1, nsrc, "source"), (1, dim_cap, "head dim")]),
                ("key", layer.key, [(1, nsrc, "source"), (1, dim_cap, "head dim")]),
                ("value", layer.value, [(1, nsrc, "source"), (1, dim_cap, "value dim")]),
                ("output", layer.output, [(1, dim_cap, "value dim"), (1, net.d, "target")]),
            ):
                for a, b, v in m:
                    check(li, (a, b), v, rs, label=(name, a, b))
                dupes(li, [(name, a, b) for a, b, _ in m], name)
        elif isinstance(layer, PerPositionBias):
            for p, g, c, v in layer.entries:
                check(li, (p, g, c), v, [(1, net.P, "position"), (0, nsrc, "gate"),
                                         (1, net.d, "channel")])
            dupes(li, [(p, g, c) for p, g, c, _ in layer.entries], "position bias")
        else:
            out.append(Violation(li, None, f"unknown layer kind {type(layer).__name__}"))
    return out


# ---------------------------------------------------------------------------
# execution engine

def _round_div(num, den: int):
    """Round num/den half away from zero (num an int or int array, den > 0)."""
    if den == 1:
        return num
    mag = (2 * np.abs(num) + den) // (2 * den)
    return np.sign(num) * mag


@dataclass
class State:
    """Integer state in delta units, including the position-feature columns."""

    units: np.ndarray  # shape (P, d + npos)
    d: int

    def values(self) -> np.ndarray:
        return self.units[:, :self.d]

    def __eq__(self, other):
        return isinstance(other, State) and np.array_equal(self.units, other.units)

    def key(self) -> bytes:
        return self.units[:, :self.d].tobytes()


class _Engine:
    def __init__(self, net: Network):
        self.net = net
        spec = net.spec
        self.a = spec.delta.numerator
        self.b = spec.delta.denominator
        self.clip = spec.act_levels
        P, d, npos = net.P, net.d, net.npos
        feats = np.zeros((P, npos), dtype=np.int64)
        for q in range(P):
            for j in range(npos):
                feats[q, j] = 1 if (q >> j) & 1 else -1
        self.feats = feats
        self.ops = [self._prepare(layer) for layer in net.layers]

    def zero(self) -> State:
        P, d = self.net.P, self.net.d
        units = np.zeros((P, d + self.net.npos), dtype=np.int64)
        units[:, d:] = self.feats
        return State(units, d)

    def _u(self, v):
        return self.net.spec.to_units(v)

    def _prepare(self, layer):
        if isinstance(layer, TiedAffine):
            tgts = sorted({t for _, t, _ in layer.weights} | {c for c, _ in layer.biases})
            srcs = sorted({s for s, _, _ in layer.weights})
            ti = {t: i for i, t in enumerate(tgts)}
            si = {s: i for i, s in enumerate(srcs)}
            W = np.zeros((len(srcs), len(tgts)), dtype=np.int64)
            for s, t, v in layer.weights:
                W[si[s], ti[t]] = self._u(v)
            bias = np.zeros(len(tgts), dtype=np.int64)
            for c, v in layer.biases:
                bias[ti[c]] = self._u(v)
            return ("affine", np.array([s - 1 for s in srcs], dtype=np.intp), W,
                    np.array([t - 1 for t in tgts], dtype=np.intp), bias)
        if isinstance(layer, HardAttention):
            def mat(entries, rows, cols):
                M = np.zeros((len(rows), len(cols)), dtype=np.int64)
                ri = {r: i for i, r in enumerate(rows)}
                ci = {c: i for i, c in enumerate(cols)}
                for r, c, v in entries:
                    M[ri[r], ci[c]] = self._u(v)
                return M
            qs = sorted({s for s, _, _ in layer.query})
            ks = sorted({s for s, _, _ in layer.key})
            hd = sorted({h for _, h, _ in layer.query} | {h for _, h, _ in layer.key})
            vs = sorted({s for s, _, _ in layer.value})
            vd = sorted({h for _, h, _ in layer.value} | {h for h, _, _ in layer.output})
            ts = sorted({t for _, t, _ in layer.output})
            return ("attn",
                    np.array([s - 1 for s in qs], dtype=np.intp), mat(layer.query, qs, hd),
                    np.array([s - 1 for s in ks], dtype=np.intp), mat(layer.key, ks, hd),
                    np.array([s - 1 for s in vs], dtype=np.intp), mat(layer.value, vs, vd),
                    mat(layer.output, vd, ts), np.array([t - 1 for t in ts], dtype=np.intp))
        if isinstance(layer, PerPositionBias):
            const = [(p - 1, c - 1, self._u(v)) for p, g, c, v in layer.entries if g == 0]
            gated = [(p - 1, g - 1, c - 1, self._u(v)) for p, g, c, v in layer.entries if g != 0]
            return ("posbias", const, gated)
        raise TypeError(f"unknown layer {layer!r}")

    def step(self, units: np.ndarray) -> np.ndarray:
        x = units.copy()
        a, b, A = self.a, self.b, self.clip
        for op in self.ops:
            kind = op[0]
            if kind == "affine":
                _, srcs, W, tgts, bias = op
                if len(srcs):
                    s = x[:, srcs] @ W
                else:
                    s = np.zeros((x.shape[0], len(tgts)), dtype=np.int64)
                z = s * a + bias * b  # in units of delta/b
                z = np.maximum(z, 0)
                x[:, tgts] = np.minimum(_round_div(z, b), A)
            elif kind == "attn":
                _, qs, Q, ks, K, vs, V, O, ts = op
                if Q.shape[1] and len(qs) and len(ks):
                    scores = (x[:, qs] @ Q) @ (x[:, ks] @ K).T
                    pick = np.argmax(scores, axis=1)
                else:
                    pick = np.zeros(x.shape[0], dtype=np.intp)
                if len(ts):
                    if len(vs):
                        out = (x[pick][:, vs] @ V) @ O
                    else:
                        out = np.zeros((x.shape[0], len(ts)), dtype=np.int64)
                    num = x[:, ts] * b * b + out * a * a
                    x[:, ts] = np.clip(_round_div(num, b * b), -A, A)
            else:
                _, const, gated = op
                for p, g, c, v in gated:
                    x[p, c] = min(A, max(-A, int(_round_div(v * int(x[p, g]) * a, b) + x[p, c])))
                for p, c, v in const:
                    x[p, c] = min(A, max(-A, int(x[p, c]) + v))
        return x


def step(net: Network, state: State) -> State:
    eng = net._engine
    if state.units.shape != (net.P, net.d + net.npos):
        raise ValueError(f"state shape {state.units.shape[0]}x{state.d} does not match "
                         f"network {net.P}x{net.d}")
    return State(eng.step(state.units), net.d)


def state_values(net: Network, state: State) -> list[list[Fraction]]:
    """The state as nested lists of exact values (positions x channels)."""
    delta = net.spec.delta
    return [[delta * int(v) for v in row] for row in state.values()]


# ---------------------------------------------------------------------------
# running

REASON_HALTED = "halted"
REASON_BUDGET = "budget-exhausted"
REASON_OUTPUT = "output-limit"


@dataclass(frozen=True)
class RunResult:
    output: str
    halted: bool
    iterations: int
    reason: str
    state: object = field(default=None, compare=False, repr=False)

    def row(self) -> dict:
        return {"output": self.output, "halted": str(self.halted).lower(),
                "iterations": self.iterations, "reason": self.reason}


_CYCLE_CELLS = 512  # fast-forward cycles only when a state is this small


def run(net: Network, step_budget: int = 10_000, output_limit: int = 1 << 20,
        trace=None) -> RunResult:
    """Iterate from the zero state, checking halt then emit after each iteration.

    ``trace`` (optional callable) receives ``(t, units)`` after each iteration.
    For small states a repeated state is fast-forwarded to the budget; the
    result is identical to stepping it out.
    """
    if step_budget < 1 or output_limit < 1:
        raise ValueError("budgets must be >= 1")
    eng = net._engine
    x = eng.zero().units
    out = []
    watch = trace is None and net.P * net.d <= _CYCLE_CELLS
    seen = {x.tobytes(): 0} if watch else None
    states, emits = [x], [None]
    for t in range(1, step_budget + 1):
        x = eng.step(x)
        if trace is not None:
            trace(t, x)
        if x[0, HALT - 1] > 0:
            return RunResult("".join(out), True, t, REASON_HALTED, State(x, net.d))
        bit = None
        if x[0, EMIT - 1] > 0:
            if len(out) >= output_limit:
                return RunResult("".join(out), False, t, REASON_OUTPUT, State(x, net.d))
            bit = "1" if x[0, BIT - 1] > 0 else "0"
            out.append(bit)
        if watch:
            key = x.tobytes()
            states.append(x)
            emits.append(bit)
            if key in seen:
                return _fast_forward(net, out, states, emits, seen[key], t, step_budget,
                                     output_limit)
            seen[key] = t
    return RunResult("".join(out), False, step_budget, REASON_BUDGET, State(x, net.d))


def _fast_forward(net, out, states, emits, t0, t, budget, limit) -> RunResult:
    """Iterations t0+1..t repeat forever; extend the run to the budget."""
    per = t - t0
    cyc = emits[t0 + 1:t + 1]
    bits = [b for b in cyc if b is not None]
    rem = budget - t
    if bits:
        room = limit - len(out)  # emits still allowed before the limit trips
        if rem // per * len(bits) + sum(b is not None for b in cyc[:rem % per]) > room:
            full, k = divmod(room, len(bits))
            # the (room + 1)-th future emit is the k-th (0-based) emit of cycle `full`
            off = [i for i, b in enumerate(cyc) if b is not None][k]
            u = t + full * per + off + 1
            out.extend(bits * full + bits[:k])
            return RunResult("".join(out), False, u, REASON_OUTPUT,
                             State(states[t0 + off + 1], net.d))
        full, part = divmod(rem, per)
        out.extend(bits * full + [b for b in cyc[:part] if b is not None])
    u = t0 + (budget - t0 - 1) % per + 1 if budget > t else t
    return RunResult("".join(out), False, budget, REASON_BUDGET, State(states[u], net.d))


def channel_trace(net: Network, channel: int, iterations: int, position: int = 1) -> list[Fraction]:
    """Values of one channel after iterations 1..n, ignoring halting."""
    eng = net._engine
    x = eng.zero().units
    out = []
    for _ in range(iterations):
        x = eng.step(x)
        out.append(net.spec.delta * int(x[position - 1, channel - 1]))
    return out


@dataclass(frozen=True)
class Cycle:
    start: int   # first iteration of the repeating segment
    period: int


def state_space_size(net: Network) -> int:
    return (2 * net.spec.act_levels + 1) ** (net.P * net.d)


def detect_cycle(net: Network, max_iterations: int) -> Cycle | None:
    """Find a repeated state before halting.

    A repeat proves the network never halts: the step map is deterministic
    and the halt check depends only on the state.  Returns None if the
    network halts or no repeat is seen within ``max_iterations``.
    """
    eng = net._engine
    x = eng.zero().units
    seen = {x[:, :net.d].tobytes(): 0}
    for t in range(1, max_iterations + 1):
        x = eng.step(x)
        if x[0, HALT - 1] > 0:
            return None
        k = x[:, :net.d].tobytes()
        if k in seen:
            return Cycle(seen[k], t - seen[k])
        seen[k] = t
    return None


# ---------------------------------------------------------------------------
# text format

def _fmt(v) -> str:
    return format_fraction(v)


def to_text(net: Network) -> str:
    lines = [f"net P={net.P} d={net.d} {net.spec.to_text()}"]
    for layer in net.layers:
        toks = [layer.kind]
        if isinstance(layer, TiedAffine):
            for s, t, v in layer.weights:
                toks += ["w", str(s), str(t), _fmt(v)]
            for c, v in layer.biases:
                toks += ["b", str(c), _fmt(v)]
        elif isinstance(layer, HardAttention):
            for tag, m in (("q", layer.query), ("k", layer.key), ("v", layer.value),
                           ("o", layer.output)):
                for r, c, v in m:
                    toks += [tag, str(r), str(c), _fmt(v)]
        else:
            for p, g, c, v in layer.entries:
                if g == 0:
                    toks += ["pb", str(p), str(c), _fmt(v)]
                else:
                    toks += ["pg", str(p), str(g), str(c), _fmt(v)]
        toks.append("end")
        lines.append(" ".join(toks))
    return "\n".join(lines) + "\n"


class NetfileError(ValueError):
    pass


def from_text(text: str) -> Network:
    """Parse the line-oriented netfile format; ``#`` starts a comment line."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or not lines[0].split()[0] == "net":
        raise NetfileError("missing 'net' header line")
    head = lines[0].split()[1:]
    kv = dict(t.split("=", 1) for t in head if "=" in t)
    try:
        P, d = int(kv.pop("P")), int(kv.pop("d"))
    except KeyError as e:
        raise NetfileError(f"header lacks {e}") from None
    spec = parse_spec(" ".join(f"{k}={v}" for k, v in kv.items()))
    toks = " ".join(lines[1:]).split()
    layers = []
    i = 0

    def take(n):
        nonlocal i
        if i + n > len(toks):
            raise NetfileError("unexpected end of netfile")
        out = toks[i:i + n]
        i += n
        return out

    while i < len(toks):
        kind = take(1)[0]
        entries = {}
        while True:
            tag = take(1)[0]
            if tag == "end":
                break
            arity = {"w": 3, "b": 2, "q": 3, "k": 3, "v": 3, "o": 3, "pb": 3, "pg": 4}.get(tag)
            if arity is None:
                raise NetfileError(f"unknown entry tag {tag!r}")
            fields = take(arity)
            vals = [int(f) for f in fields[:-1]] + [Fraction(fields[-1])]
            if tag == "pb":
                vals = [vals[0], 0, vals[1], vals[2]]
                tag = "pg"
            entries.setdefault(tag, []).append(tuple(vals))
        allowed = {"affine": {"w", "b"}, "attn": {"q", "k", "v", "o"}, "posbias": {"pg"}}
        if kind not in allowed:
            raise NetfileError(f"unknown layer kind {kind!r}")
        if set(entries) - allowed[kind]:
            raise NetfileError(f"entry tags {sorted(set(entries) - allowed[kind])} not valid in {kind}")
        if kind == "affine":
            layers.append(TiedAffine(entries.get("w", ()), entries.get("b", ())))
        elif kind == "attn":
            layers.append(HardAttention(entries.get("q", ()), entries.get("k", ()),
                                        entries.get("v", ()), entries.get("o", ())))
        else:
            layers.append(PerPositionBias(entries.get("pg", ())))
    return Network(spec, P, d, tuple(layers))
