"""Fixed-precision parameter arithmetic.

Values are exact :class:`fractions.Fraction` objects.  A precision is the
triple (delta, M, A): resolution, weight magnitude bound and activation clip
bound.  Every non-zero weight lives in the finite alphabet
``delta*Z ∩ [-M, M] \\ {0}``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        # floats are only accepted when they are exactly representable decimals
        return Fraction(str(x))
    return Fraction(x)


def format_fraction(x: Fraction) -> str:
    x = as_fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class PrecisionSpec:
    delta: Fraction
    M: Fraction
    A: Fraction = None  # defaults to M
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "delta", as_fraction(self.delta))
        object.__setattr__(self, "M", as_fraction(self.M))
        A = self.M if self.A is None else as_fraction(self.A)
        object.__setattr__(self, "A", A)
        if self.delta <= 0 or self.M <= 0 or self.A <= 0:
            raise ValueError("delta, M and A must be positive")
        if self.delta > self.M:
            raise ValueError("delta must not exceed M")
        if (self.M / self.delta).denominator != 1:
            raise ValueError("M must be an integer multiple of delta")
        if (self.A / self.delta).denominator != 1:
            raise ValueError("A must be an integer multiple of delta")

    @property
    def levels(self) -> int:
        """floor(M/delta): the largest weight magnitude in delta units."""
        return int(self.M / self.delta)

    @property
    def act_levels(self) -> int:
        """A/delta: the activation clip bound in delta units."""
        return int(self.A / self.delta)

    @property
    def alphabet_size(self) -> int:
        return 2 * self.levels

    @property
    def is_ternary(self) -> bool:
        return self.delta == 1 and self.M == 1

    @property
    def preset_id(self) -> int:
        for i, (name, spec) in enumerate(PRESETS.items(), start=1):
            if spec == self:
                return i
        return 0

    def contains(self, value) -> bool:
        """True if ``value`` is 0 or a member of the value alphabet."""
        v = as_fraction(value)
        if v == 0:
            return True
        return (v / self.delta).denominator == 1 and abs(v) <= self.M

    def to_units(self, value) -> int:
        """Express a representable value as an integer multiple of delta."""
        q = as_fraction(value) / self.delta
        if q.denominator != 1:
            raise ValueError(f"{value} is not a multiple of delta={self.delta}")
        return q.numerator

    def from_units(self, k: int) -> Fraction:
        return k * self.delta

    def to_text(self) -> str:
        return (f"delta={format_fraction(self.delta)} M={format_fraction(self.M)} "
                f"A={format_fraction(self.A)}")

    def __str__(self):
        return self.to_text()


TERNARY = PrecisionSpec(1, 1, name="ternary")
INT8 = PrecisionSpec(1, 127, name="int8")
DYADIC = PrecisionSpec(Fraction(1, 16), 8, name="dyadic")

PRESETS = {"ternary": TERNARY, "int8": INT8, "dyadic": DYADIC}

_KV = re.compile(r"(\w+)\s*=\s*(\S+)")


def parse_spec(text: str) -> PrecisionSpec:
    """Parse ``delta=<r> M=<r> [A=<r>]`` or a preset name."""
    text = text.strip()
    if text in PRESETS:
        return PRESETS[text]
    fields = dict(_KV.findall(text))
    unknown = set(fields) - {"delta", "M", "A"}
    if unknown or "delta" not in fields or "M" not in fields:
        raise ValueError(f"cannot parse precision spec {text!r}")
    spec = PrecisionSpec(Fraction(fields["delta"]), Fraction(fields["M"]),
                         Fraction(fields["A"]) if "A" in fields else None)
    for name, preset in PRESETS.items():
        if preset == spec:
            return preset
    return spec


def preset_by_id(i: int) -> PrecisionSpec | None:
    if 1 <= i <= len(PRESETS):
        return list(PRESETS.values())[i - 1]
    return None


def value_alphabet(spec: PrecisionSpec) -> list[Fraction]:
    n = spec.levels
    return [spec.delta * k for k in range(-n, n + 1) if k != 0]


def value_index(spec: PrecisionSpec, value) -> int:
    """Position of ``value`` in the sorted alphabet."""
    k = spec.to_units(value)
    n = spec.levels
    if k == 0 or abs(k) > n:
        raise ValueError(f"{value} is not in the value alphabet")
    return k + n if k < 0 else k + n - 1


def value_at(spec: PrecisionSpec, index: int) -> Fraction:
    n = spec.levels
    if not 0 <= index < 2 * n:
        raise ValueError(f"alphabet index {index} out of range")
    k = index - n if index < n else index - n + 1
    return spec.delta * k


# ---------------------------------------------------------------------------
# norms

def _check_p(p) -> int:
    if p == 0:
        return 0
    if isinstance(p, bool) or int(p) != p:
        raise ValueError(f"p must be 0 or an integer >= 1, got {p}")
    p = int(p)
    if p < 1:
        raise ValueError(f"p must be 0 or >= 1, got {p}")
    return p


def validate_params(theta: Iterable, spec: PrecisionSpec) -> list[Fraction]:
    out = []
    for i, v in enumerate(theta):
        v = as_fraction(v)
        if not spec.contains(v):
            raise ValueError(f"entry {i} = {v} not representable under {spec}")
        out.append(v)
    return out


def nonzero_count(theta: Iterable) -> int:
    return sum(1 for v in theta if v != 0)


def norm_pow(theta: Sequence, p) -> Fraction:
    """sum |theta_i|^p, exact.  For p == 0 this is the non-zero count."""
    p = _check_p(p)
    if p == 0:
        return Fraction(nonzero_count(theta))
    return sum((abs(as_fraction(v)) ** p for v in theta), Fraction(0))


def _exact_root(x: Fraction, p: int):
    if x == 0:
        return Fraction(0)
    num = round(x.numerator ** (1.0 / p))
    den = round(x.denominator ** (1.0 / p))
    for a in (num - 1, num, num + 1):
        for b in (den - 1, den, den + 1):
            if a > 0 and b > 0 and Fraction(a, b) ** p == x:
                return Fraction(a, b)
    return None


def norm(theta: Sequence, p):
    """The L_p norm of ``theta``; p = 0 gives the non-zero count.

    The result is an exact Fraction whenever the p-th root is rational and a
    float otherwise (use :func:`norm_pow` for the exact p-th power).
    """
    p = _check_p(p)
    s = norm_pow(theta, p)
    if p <= 1:
        return s
    root = _exact_root(s, p)
    return root if root is not None else float(s) ** (1.0 / p)


@dataclass(frozen=True)
class CollapseCheck:
    lower: Fraction
    value: Fraction
    upper: Fraction
    holds: bool


def collapse_check(theta: Sequence, p, spec: PrecisionSpec) -> CollapseCheck:
    """delta^p * ||theta||_0 <= ||theta||_p^p <= M^p * ||theta||_0."""
    p = _check_p(p)
    if p == 0:
        raise ValueError("collapse_check needs p >= 1")
    theta = validate_params(theta, spec)
    w = nonzero_count(theta)
    lower = spec.delta ** p * w
    upper = spec.M ** p * w
    value = norm_pow(theta, p)
    return CollapseCheck(lower, value, upper, lower <= value <= upper)


@dataclass(frozen=True)
class TransferBounds:
    k_upper: float
    k_lower: Fraction


def lp_transfer_bounds(np_value, p, spec: PrecisionSpec, c_u, c_d) -> TransferBounds:
    """Interval for K(s) permitted by the L_p sandwich, given N_p(s) = np_value.

    ``k_upper`` is (c_d/delta^p) * n^p * log2(n^p/delta^p) + c_d and
    ``k_lower`` is n^p/M^p - c_u, floored at 0.
    """
    p = _check_p(p)
    if p == 0:
        raise ValueError("lp_transfer_bounds needs p >= 1")
    n = as_fraction(np_value)
    if n < 0:
        raise ValueError("np_value must be non-negative")
    c_u = as_fraction(c_u)
    c_d = as_fraction(c_d)
    npow = n ** p
    dp = spec.delta ** p
    ratio = npow / dp
    log_term = 0.0 if npow == 0 else math.log2(ratio.numerator) - math.log2(ratio.denominator)
    k_upper = float(c_d / dp * npow) * log_term + float(c_d)
    k_lower = max(Fraction(0), npow / spec.M ** p - c_u)
    return TransferBounds(k_upper, k_lower)
