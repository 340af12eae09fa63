import math
import random
from fractions import Fraction

import pytest

import oracles
from loopk.codec import k_upper_via_codec, length_bound
from loopk.complexity import (ArchBounds, count_of_weight, enumerate_networks, enumerate_table,
                              evaluate, mdl_penalty, measured_c_d, n_upper, prior_estimate,
                              sandwich_verify, space_size, _descriptors, _fast_layers, _fast_run,
                              _materialize)
from loopk.netvm import nonzero_count, run
from loopk.precision import DYADIC, INT8, TERNARY

MICRO = ArchBounds(d_max=3, L_max=1, W_max=3, spec=TERNARY, step_budget=16)


def test_arch_bounds_validation():
    with pytest.raises(ValueError):
        ArchBounds(P=2)
    with pytest.raises(ValueError):
        ArchBounds(d_max=2)


def test_empty_space_has_one_network():
    b = ArchBounds(W_max=0)
    nets = list(enumerate_networks(b))
    assert len(nets) == 1 and nonzero_count(nets[0]) == 0


def test_single_entry_count_closed_form():
    b = ArchBounds(W_max=1)
    assert count_of_weight(b, 1) == (9 + 3) * 2
    assert len(list(enumerate_networks(b, 1))) == 24


@pytest.mark.parametrize("b", [MICRO, ArchBounds(d_max=3, L_max=2, W_max=3),
                               ArchBounds(d_max=4, L_max=2, W_max=2)])
def test_closed_form_matches_enumeration(b):
    for W in range(b.W_max + 1):
        nets = list(enumerate_networks(b, W))
        assert len(nets) == count_of_weight(b, W)
        assert all(nonzero_count(n) == W for n in nets)
        assert len(set(nets)) == len(nets)
    assert space_size(b) == sum(count_of_weight(b, W) for W in range(b.W_max + 1))


def test_micro_counts():
    assert [count_of_weight(MICRO, W) for W in range(4)] == [1, 24, 264, 1760]


@pytest.mark.parametrize("spec", [TERNARY, INT8, DYADIC])
def test_fast_runner_agrees_with_engine(spec):
    b = ArchBounds(d_max=3, L_max=2, W_max=2, spec=spec, step_budget=16)
    descs = list(_descriptors(b, 2))
    rng = random.Random(0)
    for desc in rng.sample(descs, min(300, len(descs))):
        net = _materialize(b, desc)
        r = run(net, b.step_budget, output_limit=b.output_limit)
        assert _fast_run(b, _fast_layers(b, desc))[:2] == (r.halted, r.output)
        assert evaluate(b, net)[:2] == (r.halted, r.output)


def test_micro_n_upper_examples():
    assert n_upper("", MICRO).n_hat == 1
    assert n_upper("0", MICRO).n_hat == 2
    assert n_upper("1", MICRO).n_hat == 3
    r = n_upper("11", MICRO)
    assert r.n_hat is None and r.certificate == "no network in this space"


def test_micro_witnesses_really_print():
    for s in ("", "0", "1"):
        r = n_upper(s, MICRO)
        out = run(r.witness, 16)
        assert (out.output, out.halted) == (s, True)
        assert nonzero_count(r.witness) == r.n_hat


def test_micro_oracle_agreement():
    targets = ["", "0", "1", "00", "01", "10", "11"]
    ref = oracles.micro_min_w(targets)
    for s in targets:
        assert n_upper(s, MICRO).n_hat == ref[s]


def test_prior_matches_oracle_and_sums_to_one():
    b = ArchBounds(d_max=3, L_max=1, W_max=2, step_budget=16)
    table = prior_estimate(b)
    assert table.total_q0() == 1
    assert table.space_size == 1 + 24 + 264
    mass = oracles.micro_prior()
    z = sum(mass.values())
    got = {r.s: r.q0 for r in table.rows}
    got[None] = table.undefined.q0
    assert got == {k: v / z for k, v in mass.items()}
    assert max(table.rows, key=lambda r: r.q0).s == ""
    assert got[""] == Fraction(25, 316)
    assert table.undefined.q0 == Fraction(145, 158)


def test_ternary_q2_equals_q0():
    table = prior_estimate(ArchBounds(d_max=3, L_max=2, W_max=2))
    assert table.z2 == table.z0
    for r in table.rows + [table.undefined]:
        assert r.q2 == r.q0


def test_nonternary_q2_bounds():
    spec = DYADIC
    b = ArchBounds(d_max=3, L_max=1, W_max=1, spec=spec)
    table = prior_estimate(b)
    assert table.total_q0() == 1
    if table.z2 is not None:
        assert sum((r.q2 for r in table.rows), Fraction(0)) + table.undefined.q2 == 1


def test_witness_mass_lower_bound():
    b = ArchBounds(d_max=3, L_max=1, W_max=3)
    table = prior_estimate(b)
    for r in table.rows:
        nh = n_upper(r.s, b).n_hat
        assert r.q0 >= Fraction(1, 2 ** nh) / table.z0


def test_prior_cap():
    with pytest.raises(ValueError):
        prior_estimate(MICRO, cap=100)


def test_prior_alpha_hat():
    table = prior_estimate(ArchBounds(W_max=2), k_anchor_len=6)
    assert table.alpha_hat is not None
    for r in table.rows:
        if r.k_hat is not None:
            assert 2.0 ** (-r.k_hat - table.alpha_hat) <= r.q0 * (1 + 1e-12)


def test_mdl_examples():
    assert mdl_penalty(4, 100, Fraction(1, 2), 1) == pytest.approx(0.3)
    assert mdl_penalty(4, 400, Fraction(1, 2), 1) == pytest.approx(0.15)
    assert mdl_penalty(0, 10, Fraction(1, 4), 3) == pytest.approx(math.sqrt(2 / 10))
    with pytest.raises(ValueError):
        mdl_penalty(4, 0, Fraction(1, 2), 1)
    with pytest.raises(ValueError):
        mdl_penalty(4, 10, 1, 1)


def test_measured_c_d_covers_codec_law():
    c = measured_c_d()
    assert c == 81
    for W in (1, 2, 3, 10, 4096):
        assert length_bound(W) <= float(c) * (W * math.log2(W) + 1)


def test_sandwich_eps_and_zero():
    r = sandwich_verify("", max_len=8)
    assert r.n_hat == 1 and all(v is not False for v in r.sandwich_ok.values())
    r = sandwich_verify("0", max_len=8)
    assert (r.n_hat, r.k_hat) == (2, 4)
    assert r.compile_check is True
    assert r.n_via_compile == 4 + r.c_u_measured
    assert r.k_via_codec == k_upper_via_codec(r.n_witness)
    assert all(r.sandwich_ok.values())


def test_sandwich_indeterminate():
    r = sandwich_verify("0110", max_len=4, bounds=ArchBounds(W_max=1))
    assert r.n_hat is None and r.k_hat is None
    assert set(r.sandwich_ok.values()) == {None}
    assert r.notes
    assert r.row()["n_le_k_plus_cu"] == "indeterminate"


def test_jobs_independence():
    b = ArchBounds(d_max=3, L_max=1, W_max=2)
    assert enumerate_table(b, 1) == enumerate_table(b, 4)
    for s in ("", "0", "1", "10"):
        x, y = n_upper(s, MICRO, 1), n_upper(s, MICRO, 4)
        assert (x.n_hat, x.witness, x.index) == (y.n_hat, y.witness, y.index)
    assert prior_estimate(b, 1) == prior_estimate(b, 4)


def test_anytime_monotone_chain():
    chain = [ArchBounds(3, 1, 0, step_budget=4), ArchBounds(3, 1, 1, step_budget=8),
             ArchBounds(3, 1, 2, step_budget=8), ArchBounds(3, 1, 3, step_budget=16),
             ArchBounds(3, 2, 3, step_budget=16)]
    for s in ("", "0", "1", "00"):
        vals = [n_upper(s, b).n_hat for b in chain]
        known = [v for v in vals if v is not None]
        assert known == sorted(known, reverse=True)
        assert all(vals[i] is None or vals[i + 1] is not None for i in range(len(vals) - 1))
