"""Permutation witnesses: Theta(N) parameters, Theta(N log N) bits of content.

The network keeps a one-hot row indicator ``r`` and a one-hot column scanner
``c``.  Each iteration advances the scanner cyclically (and the row when the
scanner wraps), then emits ``bit = sum_k relu(r_k + c_pi(k) - 1)``, which is 1
exactly when the current cell is an entry of the permutation matrix.  Only
the N weights ``c_pi(k) -> h_k`` depend on pi.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .codec import k_upper_via_codec
from .netvm import BIT, EMIT, HALT, Network, TiedAffine, nonzero_count
from .precision import TERNARY

G, S = 4, 5  # iteration-1 gate and its saturating partner


@dataclass(frozen=True)
class Permutation:
    mapping: tuple  # mapping[i - 1] = pi(i), 1-based

    def __post_init__(self):
        m = tuple(int(x) for x in self.mapping)
        if sorted(m) != list(range(1, len(m) + 1)):
            raise ValueError(f"{m} is not a permutation of 1..{len(m)}")
        object.__setattr__(self, "mapping", m)

    @property
    def N(self) -> int:
        return len(self.mapping)

    def __call__(self, i: int) -> int:
        return self.mapping[i - 1]

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def parse(cls, text: str) -> "Permutation":
        return cls(tuple(int(t) for t in text.replace(",", " ").split()))

    @classmethod
    def random(cls, n: int, rng: random.Random) -> "Permutation":
        m = list(range(1, n + 1))
        rng.shuffle(m)
        return cls(tuple(m))

    def text(self) -> str:
        return ",".join(map(str, self.mapping))


def perm_string(pi: Permutation) -> str:
    """Row-major serialisation of the permutation matrix."""
    n = pi.N
    return "".join("1" if pi(i) == j else "0" for i in range(1, n + 1) for j in range(1, n + 1))


@dataclass(frozen=True)
class WitnessCounts:
    pi_dependent: int
    control: int

    @property
    def total(self) -> int:
        return self.pi_dependent + self.control


def _layout(n: int) -> dict:
    ch = {}
    nxt = 6
    for name, size in (("r", n), ("c", n), ("keep", n), ("move", n - 1), ("h", n)):
        ch[name] = list(range(nxt, nxt + size))
        nxt += size
    ch["d"] = nxt - 1
    return ch


def build_perm_network(pi: Permutation) -> tuple[Network, WitnessCounts]:
    n = pi.N
    lay = _layout(n)
    r, c, keep, h = lay["r"], lay["c"], lay["keep"], lay["h"]
    move = [None] + lay["move"]  # move[k] for k >= 1 (0-based), advancing into row k

    gate = TiedAffine([(S, G, -1), (S, S, 1)], [(G, 1), (S, 1)])

    # previous cell (r, c): keep the row unless the scanner is at the last column
    w, b = [], []
    for k in range(n):
        w += [(r[k], keep[k], 1), (c[-1], keep[k], -1)]
        if k:
            w += [(r[k - 1], move[k], 1), (c[-1], move[k], 1)]
            b.append((move[k], -1))
    w += [(r[-1], HALT, 1), (c[-1], HALT, 1)]
    b.append((HALT, -1))
    advance = TiedAffine(w, b)

    w = [(keep[k], r[k], 1) for k in range(n)] + [(move[k], r[k], 1) for k in range(1, n)]
    w += [(G, r[0], 1)]
    w += [(c[k - 1], c[k], 1) for k in range(n)]  # k = 0 wraps to c[-1]
    w += [(G, c[0], 1)]
    commit = TiedAffine(w, [])

    match = TiedAffine([(r[k], h[k], 1) for k in range(n)]
                       + [(c[pi(k + 1) - 1], h[k], 1) for k in range(n)],
                       [(h[k], -1) for k in range(n)])
    out = TiedAffine([(h[k], BIT, 1) for k in range(n)], [(EMIT, 1)])

    net = Network(TERNARY, 1, lay["d"], (gate, advance, commit, match, out))
    total = nonzero_count(net)
    return net, WitnessCounts(n, total - n)


def pi_dependent_entries(pi: Permutation) -> set:
    """The (layer, src, tgt) coordinates that carry pi."""
    lay = _layout(pi.N)
    return {(3, lay["c"][pi(k + 1) - 1], lay["h"][k]) for k in range(pi.N)}


def log2_factorial(n: int) -> float:
    return math.log2(math.factorial(n)) if n > 1 else 0.0


@dataclass(frozen=True)
class TightnessRow:
    N: int
    sample: int
    perm: str
    factorial: int          # N!, exact
    log2_factorial: float
    n_hat: int
    k_hat: int
    ratio_k: float          # K^ / (N^ log2 N^)
    ratio_fact: float       # log2(N!) / (N^ log2 N^)

    def row(self) -> dict:
        return {"N": self.N, "sample": self.sample, "perm": self.perm,
                "factorial": self.factorial, "log2_factorial": f"{self.log2_factorial:.12g}",
                "n_hat": self.n_hat, "k_hat": self.k_hat,
                "ratio_k": f"{self.ratio_k:.12g}", "ratio_fact": f"{self.ratio_fact:.12g}"}


def tightness_report(n_list, samples_per_n: int = 1, seed: int = 0) -> list[TightnessRow]:
    rng = random.Random(seed)
    rows = []
    for n in n_list:
        if not 1 <= n <= 64:
            raise ValueError("N must be in 1..64")
        for k in range(samples_per_n):
            pi = Permutation.random(n, rng)
            net, counts = build_perm_network(pi)
            nh = counts.total
            kh = k_upper_via_codec(net)
            denom = nh * math.log2(nh)
            lf = log2_factorial(n)
            rows.append(TightnessRow(n, k, pi.text(), math.factorial(n), lf, nh, kh,
                                     kh / denom, lf / denom))
    return rows
