import pytest

import oracles
from loopk.bits import ParseError
from loopk.corpus import program_corpus
from loopk.machine import (AssemblyError, assemble, disassemble, enumerate_programs,
                           interpret, kt_upper, load_program, parse_program, programs_of_length,
                           search_k_upper)


def test_assemble_examples():
    p = assemble("HALT")
    assert p.bits == "1000" and len(p) == 4
    p = assemble("OUT1 HALT")
    assert p.bits == "0100" + "010" + "000" and len(p) == 10
    assert load_program(p.hex()) == p
    assert load_program(p.bits) == p


def test_disassemble_roundtrip_corpus():
    progs = program_corpus(seed=1, n=20)
    for p in progs:
        assert assemble(disassemble(p)) == p
        assert disassemble(assemble(disassemble(p))) == disassemble(p)
        assert parse_program(p.bits) == p


def test_assembly_errors():
    with pytest.raises(AssemblyError):
        assemble("NOP")
    with pytest.raises(AssemblyError):
        assemble("JMP 3")
    with pytest.raises(AssemblyError):
        assemble("INC r4")
    with pytest.raises(ParseError):
        parse_program("1000" + "0")
    with pytest.raises(ParseError):
        parse_program("1110")


def test_interpret_examples():
    r = interpret(assemble("HALT"))
    assert (r.output, r.halted, r.iterations) == ("", True, 1)
    r = interpret(assemble("OUT1 HALT"))
    assert (r.output, r.halted, r.iterations) == ("1", True, 2)
    r = interpret(assemble("INC r0; JMP 0"), step_budget=50)
    assert (r.halted, r.reason) == (False, "budget-exhausted")
    r = interpret(assemble("DECJZ r0 0"), step_budget=50)
    assert r.reason == "budget-exhausted"
    # falling off the end halts
    assert interpret(assemble("OUT0")).halted


def test_interpreter_matches_reference():
    for p in program_corpus(seed=2, n=40):
        r = interpret(p, 1000)
        ref = oracles.interpret([(i.op, i.reg, i.addr) for i in p.instructions], 1000)
        assert (r.output, r.halted) == ref


def test_enumeration_is_exactly_the_well_formed_set():
    for length in range(1, 15):
        brute = sorted(format(k, f"0{length}b") for k in range(1 << length)
                       if oracles.parse_rm4(format(k, f"0{length}b")) is not None)
        assert [p.bits for p in programs_of_length(length)] == brute


def test_prefix_free_programs():
    bits = [p.bits for p in enumerate_programs(16)]
    s = sorted(bits)
    for a, b in zip(s, s[1:]):
        assert not b.startswith(a)


# values computed by oracles.brute_k (whole-bitstring scan) and frozen
K_FROZEN = {"": 4, "0": 4, "1": 4, "11": 10, "00": 10, "01": 10, "0101": 17}


@pytest.mark.parametrize("s", list(K_FROZEN))
def test_search_k_upper(s):
    r = search_k_upper(s, 18, 1000)
    assert r.k_hat == K_FROZEN[s]
    assert interpret(r.witness).output == s


@pytest.mark.parametrize("s", ["", "1", "11", "00"])
def test_search_matches_brute_force(s):
    assert search_k_upper(s, 12, 1000).k_hat == oracles.brute_k(s, 12)


def test_witnesses():
    assert search_k_upper("", 10, 100).witness.text() == "HALT"
    assert search_k_upper("1", 10, 100).witness.text() == "OUT1"
    assert search_k_upper("11", 12, 100).witness.text() == "OUT1; OUT1"
    assert search_k_upper("1", 3, 100).k_hat is None


def test_kt_upper():
    assert kt_upper("", 10, 100).kt_hat == 4
    assert kt_upper("1", 10, 100).kt_hat == 4
    for s in ["", "0", "11", "010"]:
        k = search_k_upper(s, 14, 1000).k_hat
        kt = kt_upper(s, 14, 1000)
        assert kt.kt_hat >= k
        assert kt.witness is not None and interpret(kt.witness).output == s


def test_anytime_monotonicity():
    for s in ["", "0", "10", "111"]:
        prev_k = prev_kt = float("inf")
        for max_len, budget in [(6, 5), (10, 20), (12, 100), (14, 1000)]:
            k = search_k_upper(s, max_len, budget).k_hat
            kt = kt_upper(s, max_len, budget).kt_hat
            k = float("inf") if k is None else k
            kt = float("inf") if kt is None else kt
            assert k <= prev_k and kt <= prev_kt
            prev_k, prev_kt = k, kt


def test_parallel_search_identical():
    for s in ["", "01", "110"]:
        a = search_k_upper(s, 15, 500, jobs=1)
        b = search_k_upper(s, 15, 500, jobs=4)
        assert a == b
        assert kt_upper(s, 15, 500, jobs=1) == kt_upper(s, 15, 500, jobs=4)


def test_doubling_subadditivity_smoke():
    # K^(s s) <= K^(s) + c with c the cost of repeating a straight-line body
    for s in ["1", "0", "10"]:
        k1 = search_k_upper(s, 16, 1000).k_hat
        k2 = search_k_upper(s + s, 22, 1000).k_hat
        assert k2 <= 2 * k1 + 8
