import numpy as np
import pytest
from sympy import isprime

from conftest import random_coefficient_poly, random_evaluation_poly
from rnsckks.bconv import (BConvTable, BConvTiling, bconv_part1, bconv_part2, mod_switch)
from rnsckks.errors import BasisMismatchError, DomainMismatchError, ParameterError
from rnsckks.instrument import counters
from rnsckks.modarith import correct
from rnsckks.ntt import build_plan, intt_inverse
from rnsckks.rns import RnsBasis, crt_reconstruct, generate_basis


def assert_converted(source_poly, out, source):
    """out = X + e*P mod every target prime, 0 <= e < alpha, X the CRT value of the input"""
    big_p = source.product()
    alpha = len(source)
    values = crt_reconstruct(source_poly.wide(), source)
    got = correct(out.wide(), out.basis.limb_constants.q)
    for col, x in enumerate(values):
        matches = [e for e in range(alpha)
                   if all(int(got[i, col]) == (x + e * big_p) % q
                          for i, q in enumerate(out.basis.moduli))]
        assert matches, f"column {col} is not x + e*P for any e < {alpha}"


def primes_below(top, count, step=32):
    found = []
    x = top - ((top - 2) % step) - 1
    while len(found) < count:
        if isprime(x):
            found.append(x)
        x -= step
    return found


def test_table_constants(toy_basis):
    table = BConvTable.build(toy_basis.p_view(), toy_basis.q_view())
    assert table.alpha == 2
    assert table.reduce_every == 2 and table.mid_reductions == 0
    assert table.c.shape == (4, 2)
    for i, q in enumerate(toy_basis.moduli[:4]):
        assert np.all(np.abs(table.c[i]) <= (q - 1) // 2)
        assert np.all(np.abs(table.c_plain[i]) <= (q - 1) // 2)


def test_part1_then_part2_lands_within_alpha_multiples_of_p(toy_basis, rng):
    source, target = toy_basis.p_view(), toy_basis.q_view()
    table = BConvTable.build(source, target)
    x = random_coefficient_poly(source, rng)
    out = bconv_part2(bconv_part1(x, table), table)
    assert out.basis == target and not out.mont
    assert np.all(np.abs(out.wide()) < target.limb_constants.q)
    assert_converted(x, out, source)


def test_mod_switch_fuses_part1_into_the_inverse_transform(toy_basis, toy_plan, rng):
    source, target = toy_basis.p_view(), toy_basis.q_view()
    table = BConvTable.build(source, target)
    a = random_evaluation_poly(source, rng)
    with counters.counting() as delta:
        out = mod_switch(a, target, toy_plan, table)
    assert (delta['intt'], delta['bconv'], delta['ntt'], delta['modswitch']) == (1, 1, 1, 1)
    assert out.basis == target and out.mont
    assert_converted(intt_inverse(a, toy_plan), intt_inverse(out, toy_plan), source)


def test_mod_switch_from_q_digit_to_complement(toy_basis, toy_plan, rng):
    digit = toy_basis.sub_basis(toy_basis.moduli[:2])
    target = toy_basis.extended_view(4).without(digit)
    table = BConvTable.build(digit, target)
    a = random_evaluation_poly(digit, rng)
    out = mod_switch(a, target, toy_plan, table)
    assert out.basis.moduli == toy_basis.moduli[2:]
    assert_converted(intt_inverse(a, toy_plan), intt_inverse(out, toy_plan), digit)


@pytest.mark.parametrize('tiling', [
    BConvTiling(1, 1, 1, 1, 1),
    BConvTiling(2, 2, 2, 2, 2),
    BConvTiling(4, 4, 1, 4, 4),
    BConvTiling(1, 16, 1, 1, 4),
    BConvTiling(3, 2, 2, 8, 1),
    BConvTiling(2, 4, 1, 2, 2),
])
def test_tiling_does_not_change_the_result(toy_basis, rng, tiling):
    source, target = toy_basis.p_view(), toy_basis.q_view()
    table = BConvTable.build(source, target)
    x = bconv_part1(random_coefficient_poly(source, rng), table)
    reference = bconv_part2(x, table, BConvTiling.default_for(16))
    assert np.array_equal(bconv_part2(x, table, tiling).limbs, reference.limbs)


@pytest.mark.parametrize('tiling', [
    BConvTiling(1, 3, 1, 3, 1),
    BConvTiling(1, 4, 1, 4, 3),
    BConvTiling(1, 2, 1, 2, 4),
    BConvTiling(1, 32, 1, 1, 1),
    BConvTiling(0, 4, 1, 4, 1),
])
def test_invalid_tiling(toy_basis, rng, tiling):
    source, target = toy_basis.p_view(), toy_basis.q_view()
    table = BConvTable.build(source, target)
    x = bconv_part1(random_coefficient_poly(source, rng), table)
    with pytest.raises(ParameterError):
        bconv_part2(x, table, tiling)


def test_default_tiling_shrinks_for_small_rings():
    tiling = BConvTiling.default_for(16)
    assert (tiling.l_t, tiling.n_t, tiling.l_b, tiling.n_b, tiling.v) == (3, 4, 1, 4, 1)
    tiling.validate(4, 16)
    assert tiling.grid(4, 16) == (2, 1)
    assert BConvTiling.default_for(1 << 16) == BConvTiling(3, 4, 1, 256, 1)


def test_overlapping_or_mismatched_bases(toy_basis, rng):
    with pytest.raises(BasisMismatchError):
        BConvTable.build(toy_basis.extended_view(2), toy_basis.q_view())
    with pytest.raises(BasisMismatchError):
        BConvTable.build(generate_basis(32, 4, 2, 30).p_view(), toy_basis.q_view())
    table = BConvTable.build(toy_basis.p_view(), toy_basis.q_view())
    with pytest.raises(BasisMismatchError):
        bconv_part1(random_coefficient_poly(toy_basis.q_view(), rng), table)


def test_mod_switch_rejects_wrong_inputs(toy_basis, toy_plan, rng):
    source, target = toy_basis.p_view(), toy_basis.q_view()
    table = BConvTable.build(source, target)
    with pytest.raises(DomainMismatchError):
        mod_switch(random_coefficient_poly(source, rng), target, toy_plan, table)
    with pytest.raises(BasisMismatchError):
        mod_switch(random_evaluation_poly(source, rng), toy_basis.q_view(2), toy_plan, table)


def test_wide_source_reduces_mid_accumulation(rng):
    # six primes just below 2^30 overflow the accumulator after four terms
    source_primes = primes_below(1 << 30, 6)
    target_primes = primes_below(1 << 20, 4)
    basis = RnsBasis.from_primes(16, target_primes, source_primes, 40)
    source, target = basis.p_view(), basis.q_view()
    table = BConvTable.build(source, target)
    assert table.reduce_every == 4
    assert table.mid_reductions == 1
    x = random_coefficient_poly(source, rng)
    out = bconv_part2(bconv_part1(x, table), table)
    assert_converted(x, out, source)
    plan = build_plan(basis)
    a = random_evaluation_poly(source, rng)
    switched = mod_switch(a, target, plan, table)
    assert_converted(intt_inverse(a, plan), intt_inverse(switched, plan), source)


FULL_SCALE_TILINGS = [
    BConvTiling(1, 4, 1, 256, 4), BConvTiling(4, 2, 2, 128, 2), BConvTiling(3, 1, 4, 64, 1),
    BConvTiling(1, 1, 1, 256, 1), BConvTiling(2, 2, 1, 256, 2), BConvTiling(4, 4, 4, 64, 4),
    BConvTiling(3, 2, 2, 128, 1), BConvTiling(1, 8, 1, 128, 4), BConvTiling(2, 4, 2, 128, 4),
]


@pytest.mark.slow
@pytest.mark.parametrize('level', [54, 28])
def test_full_scale_conversion(level):
    basis = generate_basis(1 << 16, 54, 14, 48)
    rng = np.random.default_rng(level)
    merged = basis.sub_basis(basis.moduli[level - 2:level] + tuple(c.q for c in basis.p_contexts))
    rest = basis.q_view(level - 2)
    table = BConvTable.build(merged, rest)
    assert table.mid_reductions >= 1
    source = basis.p_view()
    p_table = BConvTable.build(source, basis.q_view(level))

    for conversion in (p_table, table):
        x = bconv_part1(random_coefficient_poly(conversion.source, rng), conversion)
        reference = bconv_part2(x, conversion)
        for tiling in FULL_SCALE_TILINGS:
            tiling.validate(len(conversion.target), 1 << 16)
            assert np.array_equal(bconv_part2(x, conversion, tiling).limbs, reference.limbs)
