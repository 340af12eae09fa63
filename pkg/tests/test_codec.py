import random

import pytest
from hypothesis import given, settings, strategies as st

from loopk.bits import ParseError, pack_bits
from loopk.codec import (LENGTH_OFFSET, LENGTH_SLOPE, CapacityError, decode, encode,
                         k_upper_via_codec, length_bound, prune)
from loopk.corpus import random_network
from loopk.netvm import (Network, PerPositionBias, TiedAffine, channel_trace, nonzero_count,
                         run)
from loopk.precision import DYADIC, INT8, TERNARY
from loopk.witness import Permutation, build_perm_network

GATE_NET = Network(TERNARY, 1, 5, (TiedAffine([(5, 5, 1), (5, 4, -1)], [(5, 1), (4, 1)]),))
EMIT0_NET = Network(TERNARY, 1, 3, (TiedAffine([(2, 1, 1)], [(2, 1)]),))

# bit-exact streams, packed MSB first with a zero-padded tail
GOLDEN = {
    "zero": (Network(TERNARY, 1, 3, ()), "ae22"),
    "emit0": (EMIT0_NET, "55a08930a0"),
    "gate": (GATE_NET, "6b6822582d824160"),
}


def test_emit0_stream_by_hand():
    header = "0101" + "0101" + "1" + "0100" + "0001" + "0001"  # W+1=3 d=3 P=1 L+1=2 preset version
    # no layer bits (L=1), 2-bit coordinates (d*P+1 = 4), 1-bit value index (+1 -> 1)
    weight = "00" + "10" + "01" + "1"
    bias = "00" + "00" + "10" + "1"
    assert encode(EMIT0_NET)[0] == header + weight + bias


@pytest.mark.parametrize("name", list(GOLDEN))
def test_golden_streams(name):
    n, hexbytes = GOLDEN[name]
    bits, _ = encode(prune(n))
    assert pack_bits(bits).hex() == hexbytes
    assert decode(bits, TERNARY) == prune(n)


def test_zero_network_header_only():
    bits, stats = encode(prune(Network(TERNARY, 1, 7, (TiedAffine(),))))
    assert stats.W == 0 and stats.tuple_bits == 0
    assert bits.startswith("1")  # delta(W + 1) = delta(1)
    assert decode(bits, TERNARY) == Network(TERNARY, 1, 3, ())


def test_prune_examples():
    assert prune(EMIT0_NET) == EMIT0_NET
    assert prune(prune(GATE_NET)) == prune(GATE_NET)
    padded = Network(TERNARY, 1, 6, (TiedAffine([(2, 1, 1)], [(2, 1)]), TiedAffine()))
    p = prune(padded)
    assert p.d == 3 and len(p.layers) == 1
    assert run(p) == run(padded)
    one_unused = Network(TERNARY, 1, 5, (TiedAffine([(4, 1, 1)], [(4, 1), (2, 1)]),))
    assert prune(one_unused).d == 4
    assert run(prune(one_unused)) == run(one_unused)


def test_gate_trace_survives_codec():
    bits, _ = encode(prune(GATE_NET))
    back = decode(bits, TERNARY)
    assert channel_trace(back, 4, 50) == channel_trace(GATE_NET, 4, 50)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 1 << 30), st.sampled_from([TERNARY, INT8, DYADIC]),
       st.sampled_from([1, 2, 3, 5]))
def test_roundtrip_property(seed, spec, P):
    rng = random.Random(seed)
    n = random_network(rng, spec, rng.randint(0, 40), P=P, kinds=("affine", "posbias", "attn"))
    p = prune(n)
    bits, stats = encode(p)
    assert stats.total_bits == len(bits)
    back = decode(bits, spec)
    assert back == p
    assert run(back, 300) == run(p, 300) == run(n, 300)


def test_prefix_free_corpus():
    rng = random.Random(5)
    streams = set()
    for _ in range(150):
        n = random_network(rng, TERNARY, rng.randint(0, 12), P=rng.choice([1, 2]))
        streams.add(encode(prune(n))[0])
    # adversarial near-duplicates: a single extra parameter
    base = EMIT0_NET
    streams.add(encode(Network(TERNARY, 1, 3, (TiedAffine([(2, 1, 1)], [(2, 1), (3, 1)]),)))[0])
    streams.add(encode(base)[0])
    s = sorted(streams)
    for a, b in zip(s, s[1:]):
        assert not b.startswith(a)


def test_truncation_and_corruption():
    bits, _ = encode(prune(GATE_NET))
    for cut in range(len(bits)):
        with pytest.raises(ParseError) as e:
            decode(bits[:cut], TERNARY)
        assert e.value.offset is not None
    with pytest.raises(ParseError):
        decode(bits + "1", TERNARY)
    for i in range(len(bits)):
        flipped = bits[:i] + ("1" if bits[i] == "0" else "0") + bits[i + 1:]
        try:
            decode(flipped, TERNARY)
        except ParseError:
            pass


def test_kind_tag_conflict_is_a_parse_error():
    n = Network(TERNARY, 2, 3, (TiedAffine([(1, 2, 1), (2, 3, 1)]),))
    bits, _ = encode(n)
    # second tuple: no layer bits (L=1), its tag 00 becomes 01 (posbias)
    head = len(bits) - 2 * (2 + 3 + 3 + 1)
    bad = bits[:head + 9] + "01" + bits[head + 11:]
    with pytest.raises(ParseError):
        decode(bad, TERNARY)


def test_length_law_constants_frozen():
    assert (LENGTH_SLOPE, LENGTH_OFFSET) == (17, 64)
    assert length_bound(64) == 3 * 64 * 6 + 17 * 64 + 64


def test_length_law_random_w64():
    rng = random.Random(64)
    for _ in range(20):
        n = random_network(rng, TERNARY, 64, d=rng.randint(8, 40), P=1, kinds=("affine",))
        bits, stats = encode(prune(n))
        assert nonzero_count(n) == 64
        assert stats.total_bits <= 3 * 64 * 6 + 17 * 64 + 64


def test_capacity_error(monkeypatch):
    import loopk.codec as codec
    monkeypatch.setattr(codec, "MAX_W", 1)
    with pytest.raises(CapacityError):
        encode(EMIT0_NET)


def test_k_upper_via_codec():
    zero = Network(TERNARY, 1, 3, ())
    assert k_upper_via_codec(zero, c_pi=7) == len(encode(zero)[0]) + 7
    w4, _ = build_perm_network(Permutation((2, 4, 1, 3)))
    assert k_upper_via_codec(w4) >= 4.585
    padded = Network(TERNARY, 1, 9, (TiedAffine([(2, 1, 1)], [(2, 1)]),))
    assert k_upper_via_codec(EMIT0_NET) <= len(encode(padded)[0])


def test_posbias_pruning_drops_unused_positions():
    n = Network(TERNARY, 6, 3, (PerPositionBias([(1, 0, 1, 1)]),))
    assert prune(n).P == 1
    assert run(prune(n)) == run(n)
