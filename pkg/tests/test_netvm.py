import random
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from loopk.corpus import random_network
from loopk.netvm import (HardAttention, Network, NetfileError, PerPositionBias, State,
                         TiedAffine, channel_trace, detect_cycle, from_text, nonzero_count, run,
                         step, to_text, validate)
from loopk.precision import DYADIC, INT8, TERNARY, PrecisionSpec

GATE = TiedAffine([(5, 5, 1), (5, 4, -1)], [(5, 1), (4, 1)])


def net(*layers, P=1, d=5, spec=TERNARY):
    return Network(spec, P, d, layers)


def test_validate_examples():
    assert validate(Network(TERNARY, 1, 3, ())) == []
    bad = validate(net(TiedAffine([(1, 2, 2)])))
    assert len(bad) == 1 and "alphabet" in bad[0].rule and bad[0].coordinate == (1, 2)
    dup = validate(net(TiedAffine([(1, 2, 1), (1, 2, -1)])))
    assert len(dup) == 1 and "duplicate" in dup[0].rule


def test_validate_ranges_and_zeros():
    assert validate(net(TiedAffine([(9, 1, 1)])))
    assert validate(net(TiedAffine([], [(1, 0)])))
    assert validate(net(PerPositionBias([(2, 0, 1, 1)])))
    assert not validate(net(PerPositionBias([(2, 0, 1, 1)]), P=2))
    assert validate(Network(TERNARY, 1, 2, ()))


def test_step_examples():
    n = net()
    z = n.zero_state()
    assert step(n, z) == z
    s1 = step(net(TiedAffine([], [(5, 1)])), z)
    assert s1.values().tolist() == [[0, 0, 0, 0, 1]]
    g = net(GATE)
    s = step(g, g.zero_state())
    assert s.values()[0, 3] == 1 and s.values()[0, 4] == 1
    s = step(g, s)
    assert s.values()[0, 3] == 0
    with pytest.raises(ValueError):
        step(g, State(np.zeros((2, 5), dtype=np.int64), 5))


def test_run_examples():
    r = run(Network(TERNARY, 1, 3, ()), 100)
    assert (r.output, r.halted, r.reason) == ("", False, "budget-exhausted")
    r = run(Network(TERNARY, 1, 3, (TiedAffine([], [(1, 1)]),)))
    assert (r.output, r.halted, r.iterations) == ("", True, 1)
    r = run(Network(TERNARY, 1, 3, (TiedAffine([(2, 1, 1)], [(2, 1)]),)))
    assert (r.output, r.halted, r.iterations) == ("0", True, 2)


def test_output_limit_reason():
    r = run(Network(TERNARY, 1, 3, (TiedAffine([], [(2, 1)]),)), 100, output_limit=5)
    assert (r.output, r.halted, r.reason) == ("00000", False, "output-limit")


def test_gate_trace():
    trace = channel_trace(net(GATE), 4, 10_000)
    assert trace[0] == 1 and not any(trace[1:])
    assert channel_trace(net(GATE), 5, 50) == [1] * 50


def test_nonzero_count_rules():
    assert nonzero_count(net()) == 0
    assert nonzero_count(Network(TERNARY, 16, 5, (TiedAffine([(1, 2, 1)], [(3, 1)]),))) == 2
    pb = PerPositionBias([(p, 0, 1, 1) for p in range(1, 8)])
    assert nonzero_count(Network(TERNARY, 8, 3, (pb,))) == 7


def test_rounding_half_away_and_clip():
    half = PrecisionSpec(F(1, 2), 1)
    # 1/2 * 1/2 = 1/4 rounds away from zero to 1/2; 3 * 1/2 clips to A = 1
    n = Network(half, 1, 4, (TiedAffine([], [(4, F(1, 2))]),
                             TiedAffine([(4, 4, F(1, 2))], []),))
    assert channel_trace(n, 4, 1) == [F(1, 2)]
    n2 = Network(INT8, 1, 4, (TiedAffine([], [(4, 100)]), TiedAffine([(4, 4, 3)], [])))
    assert channel_trace(n2, 4, 1) == [127]


def test_attention_lowest_index_tie_break():
    # every position scores 0 against every key: position 1 is picked and its
    # channel-4 value (a position bias) lands in channel 5 of every row
    att = HardAttention([(1, 1, 1)], [(1, 1, 1)], [(4, 1, 1)], [(1, 5, 1)])
    pb = PerPositionBias([(1, 0, 4, 1), (2, 0, 4, -1), (3, 0, 4, -1)])
    n = Network(TERNARY, 3, 5, (pb, att))
    s = step(n, n.zero_state())
    assert s.values()[:, 4].tolist() == [1, 1, 1]


def test_attention_selects_addressed_row():
    # query from a constant channel against signed position features picks row 1
    const = TiedAffine([], [(4, 1)])
    att = HardAttention([(4, 1, -1), (4, 2, -1)], [(6, 1, 1), (7, 2, 1)], [(3, 1, 1)], [(1, 5, 1)])
    pb = PerPositionBias([(1, 0, 3, 1), (3, 0, 3, -1)])
    n = Network(TERNARY, 4, 5, (pb, const, att))
    s = step(n, n.zero_state())
    assert s.values()[:, 4].tolist() == [1, 1, 1, 1]


def test_gated_position_bias():
    pb = PerPositionBias([(1, 4, 5, 1), (2, 4, 5, -1)])
    n = Network(TERNARY, 2, 5, (GATE, pb))
    # the gate is 1 only at t = 1, and channel 5 also carries c2 = 1 afterwards
    x = n.zero_state()
    x = step(n, x)
    assert x.values()[:, 4].tolist() == [1, 0]


def test_determinism_and_closure():
    rng = random.Random(3)
    for spec in (TERNARY, INT8, DYADIC):
        for _ in range(20):
            n = random_network(rng, spec, rng.randint(1, 30), P=rng.choice([1, 2, 3]),
                               kinds=("affine", "posbias", "attn"))
            a, b = run(n, 200), run(n, 200)
            assert a == b
            x = n.zero_state()
            cap = spec.act_levels
            for _ in range(10):
                x = step(n, x)
                assert np.abs(x.values()).max(initial=0) <= cap


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([TERNARY, PrecisionSpec(F(1, 2), 2)]))
def test_affine_matches_fraction_reference(seed, spec):
    rng = random.Random(seed)
    n = random_network(rng, spec, rng.randint(1, 12), d=rng.randint(3, 6), kinds=("affine",))
    layers = [({(s, t): v for s, t, v in layer.weights}, {c: v for c, v in layer.biases})
              for layer in n.layers]
    halted, out, t = oracles.run_affine(layers, n.d, spec.delta, spec.A, 64)
    r = run(n, 64)
    assert (r.halted, r.output) == (halted, out)
    if halted:
        assert r.iterations == t


def test_cycle_detection():
    blinker = Network(TERNARY, 1, 4, (TiedAffine([(4, 4, -1)], [(4, 1)]),))
    c = detect_cycle(blinker, 100)
    assert c is not None and c.period == 2
    assert detect_cycle(Network(TERNARY, 1, 3, (TiedAffine([], [(1, 1)]),)), 10) is None


def test_text_roundtrip():
    rng = random.Random(9)
    for spec in (TERNARY, INT8, DYADIC):
        for _ in range(30):
            n = random_network(rng, spec, rng.randint(0, 25), P=rng.choice([1, 4]),
                               kinds=("affine", "posbias", "attn"))
            text = to_text(n)
            assert from_text(text) == n
            assert to_text(from_text(text)) == text


def test_text_format_shape():
    text = to_text(Network(TERNARY, 1, 3, (TiedAffine([(2, 1, 1)], [(2, 1)]),)))
    assert text == "net P=1 d=3 delta=1 M=1 A=1\naffine w 2 1 1 b 2 1 end\n"
    with pytest.raises(NetfileError):
        from_text("affine end")
    with pytest.raises(NetfileError):
        from_text("net P=1 d=3 delta=1 M=1 A=1\naffine w 1 2")


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 1 << 30), st.sampled_from([TERNARY, INT8, DYADIC]),
       st.sampled_from([1, 7, 64, 500]), st.sampled_from([1, 4, 1000]))
def test_cycle_fast_forward_matches_stepping(seed, spec, budget, limit):
    rng = random.Random(seed)
    n = random_network(rng, spec, rng.randint(0, 16), P=rng.choice([1, 2, 3]),
                       kinds=("affine", "posbias", "attn"))
    fast = run(n, budget, limit)
    slow = run(n, budget, limit, trace=lambda t, x: None)  # tracing disables the shortcut
    assert fast == slow
    assert fast.state == slow.state
