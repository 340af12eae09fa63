"""Self-delimiting bit encoding of networks, and pruning.

Layout (all integers MSB first)::

    delta(W+1) delta(d) delta(P) delta(L+1) preset:4 version:4
    W tuples:  layer:width(L)  tag:2  fields...  value:width(|V|)

Tags and their fields (``c`` = width(d*P + 1) bits per coordinate)::

    0 affine     src:c tgt:c          src 0 is the bias source
    1 posbias    gated:1 pos:c [gate:c] ch:c
    2 attn Q/K   which:1 src:c dim:c  which 0 = query, 1 = key
    3 attn V/O   which:1 a:c b:c      which 0 = value (src, dim), 1 = output (dim, tgt)

Field widths follow from the header, so they are never transmitted.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bits import BitReader, ParseError, elias_delta, width, uint
from .netvm import (HALT, BIT, EMIT, HardAttention, Network, PerPositionBias,
                    TiedAffine, nonzero_count, validate)
from .precision import PrecisionSpec, preset_by_id, value_alphabet, value_at, value_index

FORMAT_VERSION = 1
MAX_W = 2 ** 64 - 2

# Length law |encode| <= 3 W ceil(log2 W) + LENGTH_SLOPE * W + LENGTH_OFFSET for
# pruned single-position networks under the presets.  Per tuple: layer index
# <= ceil(log2 W), two coordinates <= ceil(log2 W) + 3 each (d <= 2W + 3),
# tag/flag 3 bits, value <= 8 bits: 3 ceil(log2 W) + 17.  The header is
# O(log W) and fits in the offset for every W up to 2^16.
LENGTH_SLOPE = 17
LENGTH_OFFSET = 64


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class EncodingStats:
    W: int
    header_bits: int
    tuple_bits: int
    total_bits: int
    bound_value: int
    slope: int = LENGTH_SLOPE
    offset: int = LENGTH_OFFSET


def length_bound(W: int, slope: int = LENGTH_SLOPE, offset: int = LENGTH_OFFSET) -> int:
    log_w = (W - 1).bit_length() if W > 1 else 0  # ceil(log2 W)
    return 3 * W * log_w + slope * W + offset


# ---------------------------------------------------------------------------
# pruning

def prune(net: Network) -> Network:
    """Drop empty layers and untouched channels/positions, relabelling in order.

    Channels 1-3 always survive.  Positions are only dropped when the network
    has no attention layer and reads no position feature, since otherwise
    rows interact or their count is observable.
    """
    layers = [layer for layer in net.layers if layer.count()]
    d = net.d
    used = {HALT, EMIT, BIT}
    reads_features = False

    def src(c):
        nonlocal reads_features
        if c > d:
            reads_features = True
        elif c >= 1:
            used.add(c)

    has_attention = False
    max_pos = 1
    for layer in layers:
        if isinstance(layer, TiedAffine):
            for s, t, _ in layer.weights:
                src(s)
                used.add(t)
            for c, _ in layer.biases:
                used.add(c)
        elif isinstance(layer, HardAttention):
            has_attention = True
            for s, _, _ in layer.query + layer.key + layer.value:
                src(s)
            for _, t, _ in layer.output:
                used.add(t)
        else:
            for p, g, c, _ in layer.entries:
                if g:
                    src(g)
                used.add(c)
                max_pos = max(max_pos, p)
    order = sorted(used)
    new_d = len(order)
    relabel = {c: i for i, c in enumerate(order, start=1)}
    P = net.P if (has_attention or reads_features) else max_pos

    def ch(c):
        if c > d:
            return new_d + (c - d)
        return relabel[c]

    out = []
    for layer in layers:
        if isinstance(layer, TiedAffine):
            out.append(TiedAffine([(ch(s), ch(t), v) for s, t, v in layer.weights],
                                  [(ch(c), v) for c, v in layer.biases]))
        elif isinstance(layer, HardAttention):
            hd = sorted({h for _, h, _ in layer.query + layer.key})
            vd = sorted({h for _, h, _ in layer.value} | {h for h, _, _ in layer.output})
            hm = {h: i for i, h in enumerate(hd, start=1)}
            vm = {h: i for i, h in enumerate(vd, start=1)}
            out.append(HardAttention(
                [(ch(s), hm[h], v) for s, h, v in layer.query],
                [(ch(s), hm[h], v) for s, h, v in layer.key],
                [(ch(s), vm[h], v) for s, h, v in layer.value],
                [(vm[h], ch(t), v) for h, t, v in layer.output]))
        else:
            out.append(PerPositionBias([(p, ch(g) if g else 0, ch(c), v)
                                        for p, g, c, v in layer.entries]))
    return Network(net.spec, P, new_d, tuple(out))


# ---------------------------------------------------------------------------
# encoding

def _tuples(net: Network):
    """(layer, tag, extra bit or None, coordinates, value) in canonical order."""
    for li, layer in enumerate(net.layers):
        if isinstance(layer, TiedAffine):
            for s, t, v in layer.weights:
                yield li, 0, None, (s, t), v
            for c, v in layer.biases:
                yield li, 0, None, (0, c), v
        elif isinstance(layer, PerPositionBias):
            for p, g, c, v in layer.entries:
                if g:
                    yield li, 1, 1, (p, g, c), v
                else:
                    yield li, 1, 0, (p, c), v
        else:
            for s, h, v in layer.query:
                yield li, 2, 0, (s, h), v
            for s, h, v in layer.key:
                yield li, 2, 1, (s, h), v
            for s, h, v in layer.value:
                yield li, 3, 0, (s, h), v
            for h, t, v in layer.output:
                yield li, 3, 1, (h, t), v


def encode(net: Network) -> tuple[str, EncodingStats]:
    problems = validate(net)
    if problems:
        raise ValueError(f"cannot encode an invalid network: {problems[0]}")
    W = nonzero_count(net)
    if W > MAX_W:
        raise CapacityError(f"W={W} exceeds the encodable maximum {MAX_W}")
    spec = net.spec
    L = len(net.layers)
    header = (elias_delta(W + 1) + elias_delta(net.d) + elias_delta(net.P)
              + elias_delta(L + 1) + uint(spec.preset_id, 4) + uint(FORMAT_VERSION, 4))
    lw = width(L)
    cw = width(net.d * net.P + 1)
    vw = width(spec.alphabet_size)
    body = []
    for li, tag, extra, coords, v in _tuples(net):
        parts = [uint(li, lw), uint(tag, 2)]
        if extra is not None:
            parts.append(str(extra))
        parts += [uint(c, cw) for c in coords]
        parts.append(uint(value_index(spec, v), vw))
        body.append("".join(parts))
    body = "".join(body)
    bits = header + body
    stats = EncodingStats(W, len(header), len(body), len(bits), length_bound(W))
    return bits, stats


def decode(bits: str, spec: PrecisionSpec, allow_padding: bool = False) -> Network:
    """Inverse of :func:`encode`; malformed input raises :class:`ParseError`."""
    r = BitReader(bits)
    W = r.read_delta("W") - 1
    d = r.read_delta("d")
    P = r.read_delta("P")
    L = r.read_delta("L") - 1
    at = r.pos
    preset = r.read(4, "preset")
    version = r.read(4, "version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version}", at + 4, "version")
    if preset and preset_by_id(preset) != spec:
        raise ParseError(f"stream was written for preset {preset}, not {spec}", at, "preset")
    if d < 3:
        raise ParseError("d must be >= 3", at, "d")
    if W and not L:
        raise ParseError("parameters present but no layers", at, "L")
    lw = width(L)
    cw = width(d * P + 1)
    vw = width(spec.alphabet_size)
    nv = spec.alphabet_size
    kinds = [None] * L
    entries = [dict() for _ in range(L)]
    for j in range(W):
        start = r.pos
        li = r.read(lw, f"tuple[{j}].layer")
        if li >= L:
            raise ParseError(f"layer index {li} >= {L}", start, f"tuple[{j}].layer")
        tag_at = r.pos
        tag = r.read(2, f"tuple[{j}].kind")
        kind = {0: "affine", 1: "posbias", 2: "attn", 3: "attn"}[tag]
        if kinds[li] not in (None, kind):
            raise ParseError(f"kind tag {tag} conflicts with layer kind {kinds[li]}",
                             tag_at, f"tuple[{j}].kind")
        kinds[li] = kind
        extra = r.read(1, f"tuple[{j}].flag") if tag else None
        ncoords = 3 if (tag == 1 and extra) else 2
        coords = [r.read(cw, f"tuple[{j}].coord{k}") for k in range(ncoords)]
        vat = r.pos
        vi = r.read(vw, f"tuple[{j}].value")
        if vi >= nv:
            raise ParseError(f"value index {vi} out of range", vat, f"tuple[{j}].value")
        v = value_at(spec, vi)
        if tag == 0:
            s, t = coords
            key = "b" if s == 0 else "w"
            entries[li].setdefault(key, []).append((t, v) if s == 0 else (s, t, v))
        elif tag == 1:
            if extra:
                p, g, c = coords
                if g == 0:
                    raise ParseError("gated entry with gate 0", start, f"tuple[{j}]")
            else:
                (p, c), g = coords, 0
            entries[li].setdefault("pb", []).append((p, g, c, v))
        else:
            key = {(2, 0): "q", (2, 1): "k", (3, 0): "v", (3, 1): "o"}[(tag, extra)]
            entries[li].setdefault(key, []).append((*coords, v))
    rest = bits[r.pos:]
    if rest and not (allow_padding and len(rest) < 8 and "1" not in rest):
        raise ParseError("trailing bits after the last tuple", r.pos, "stream")
    layers = []
    for li in range(L):
        e = entries[li]
        if kinds[li] == "affine":
            layers.append(TiedAffine(e.get("w", ()), e.get("b", ())))
        elif kinds[li] == "posbias":
            layers.append(PerPositionBias(e.get("pb", ())))
        elif kinds[li] == "attn":
            layers.append(HardAttention(e.get("q", ()), e.get("k", ()), e.get("v", ()),
                                        e.get("o", ())))
        else:
            raise ParseError(f"layer {li} has no parameters", r.pos, "L")
    net = Network(spec, P, d, tuple(layers))
    problems = validate(net)
    if problems:
        raise ParseError(f"decoded network is invalid: {problems[0]}", r.pos, "tuples")
    return net


def k_upper_via_codec(net: Network, c_pi: int = 0) -> int:
    """|encode(prune(net))| + c_pi: a K bound modulo the simulator constant c_pi."""
    bits, _ = encode(prune(net))
    return len(bits) + c_pi
