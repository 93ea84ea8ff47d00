import numpy as np
import pytest

from conftest import random_coefficient_poly, random_evaluation_poly, random_rows
from rnsckks.automorphism import automorphism_stage
from rnsckks.errors import (BasisMismatchError, DomainMismatchError, ParameterError, PoolError,
                            SerializationError)
from rnsckks.modarith import R, correct
from rnsckks.poly import (BufferPool, Domain, Polynomial, add_const_stage, add_stage,
                          concat_limbs, correct_stage, ew_add, ew_add_const, ew_mac, ew_mul,
                          ew_mul_const, ew_neg, ew_sub, fuse, lazy_add_stage, mul_const_stage,
                          mul_stage, neg_stage, sub_stage)


def residues(p):
    return correct(p.wide(), p.basis.limb_constants.q)


def plain_values(p):
    """Canonical residues with the Montgomery factor removed"""
    q = p.basis.limb_constants.q
    values = residues(p)
    if p.mont:
        r_inv = np.asarray([pow(R, -1, int(m)) for m in q[:, 0]], dtype=np.int64).reshape(-1, 1)
        values = values * r_inv % q
    return values


def test_zeros_and_copy(toy_basis):
    z = Polynomial.zeros(toy_basis, Domain.EVALUATION, mont=True)
    assert z.limbs.shape == (6, 16) and z.limbs.dtype == np.int32
    assert z.canonical and not np.any(z.limbs)
    c = z.copy()
    c.limbs[0, 0] = 1
    assert z.limbs[0, 0] == 0


def test_restrict_and_concat(toy_basis, rng):
    p = random_evaluation_poly(toy_basis, rng)
    q_part = p.restrict(toy_basis.q_view())
    p_part = p.restrict(toy_basis.p_view())
    joined = concat_limbs([p_part, q_part], toy_basis)
    assert np.array_equal(joined.limbs, p.limbs)
    with pytest.raises(BasisMismatchError):
        concat_limbs([q_part], toy_basis)


def test_elementwise_ops_match_modular_arithmetic(toy_basis, rng):
    a = random_evaluation_poly(toy_basis, rng)
    b = random_evaluation_poly(toy_basis, rng)
    q = toy_basis.limb_constants.q
    assert np.array_equal(residues(ew_add(a, b)), (a.wide() + b.wide()) % q)
    assert np.array_equal(residues(ew_sub(a, b)), (a.wide() - b.wide()) % q)
    assert np.array_equal(residues(ew_neg(a)), (-a.wide()) % q)
    product = ew_mul(a, b)
    assert product.mont
    assert np.array_equal(plain_values(product), plain_values(a) * plain_values(b) % q)


def test_mixed_form_product_leaves_montgomery_form(toy_basis, rng):
    a = random_evaluation_poly(toy_basis, rng)
    b = Polynomial.from_wide(random_rows(toy_basis, rng), toy_basis, Domain.EVALUATION, False,
                             canonical=True)
    out = ew_mul(a, b)
    assert not out.mont
    q = toy_basis.limb_constants.q
    assert np.array_equal(residues(out), plain_values(a) * residues(b) % q)


def test_constant_stages_preserve_form(toy_basis, rng):
    a = random_evaluation_poly(toy_basis, rng)
    q = toy_basis.limb_constants.q
    constants = [3, 5, 7, 11, 13, 17]
    col = np.asarray(constants, dtype=np.int64).reshape(-1, 1)
    scaled = ew_mul_const(a, constants)
    assert scaled.mont
    assert np.array_equal(plain_values(scaled), plain_values(a) * col % q)
    shifted = ew_add_const(a, constants)
    assert np.array_equal(plain_values(shifted), (plain_values(a) + col) % q)
    scalar = ew_mul_const(a, 2)
    assert np.array_equal(plain_values(scalar), plain_values(a) * 2 % q)


def test_fused_pipeline_matches_sequential_and_composed_ops(toy_basis, rng):
    x, y, z = (random_evaluation_poly(toy_basis, rng) for _ in range(3))
    stages = [mul_stage(y), lazy_add_stage(z), mul_const_stage([2] * 6), sub_stage(x),
              neg_stage(), add_const_stage([1] * 6), correct_stage()]
    pipeline = fuse(stages)
    fused = pipeline(x)
    sequential = pipeline.run_sequential(x)
    assert np.array_equal(fused.limbs, sequential.limbs)
    composed = ew_add_const(ew_neg(ew_sub(ew_mul_const(ew_add(ew_mul(x, y), z), 2), x)), 1)
    assert fused.same_residues(composed)
    assert fused.canonical


def test_fusion_rejects_unreduced_lazy_chain(toy_basis, rng):
    x, y = random_evaluation_poly(toy_basis, rng), random_evaluation_poly(toy_basis, rng)
    with pytest.raises(ParameterError):
        fuse([lazy_add_stage(y), lazy_add_stage(y)])(x)


def test_fusion_rejects_automorphism_stage(toy_basis, rng):
    with pytest.raises(ParameterError):
        fuse([automorphism_stage(1)])


def test_flag_discipline(toy_basis, rng):
    evaluation = random_evaluation_poly(toy_basis, rng)
    coefficient = random_coefficient_poly(toy_basis, rng)
    plain_eval = Polynomial.from_wide(random_rows(toy_basis, rng), toy_basis, Domain.EVALUATION,
                                      False, canonical=True)
    with pytest.raises(DomainMismatchError):
        ew_add(evaluation, coefficient)
    with pytest.raises(DomainMismatchError):
        ew_add(evaluation, plain_eval)
    with pytest.raises(BasisMismatchError):
        ew_add(evaluation, evaluation.restrict(toy_basis.q_view()))
    with pytest.raises(ParameterError):
        ew_mul(evaluation, Polynomial.empty())


def test_empty_polynomial_is_an_additive_seed(toy_basis, rng):
    a = random_evaluation_poly(toy_basis, rng)
    assert np.array_equal(ew_add(Polynomial.empty(), a).limbs, a.limbs)
    assert np.array_equal(ew_sub(a, Polynomial.empty()).limbs, a.limbs)


def test_mac_with_delayed_reductions(toy_basis, rng):
    # P primes near 2^30 force a mid-way reduction every couple of products
    pairs = [(random_evaluation_poly(toy_basis, rng), random_evaluation_poly(toy_basis, rng))
             for _ in range(7)]
    expected = Polynomial.empty()
    for a, b in pairs:
        expected = ew_add(expected, ew_mul(a, b))
    out = ew_mac(pairs)
    assert out.mont
    assert out.same_residues(expected)


def test_mac_rejects_mixed_forms(toy_basis, rng):
    a = random_evaluation_poly(toy_basis, rng)
    plain = Polynomial.from_wide(random_rows(toy_basis, rng), toy_basis, Domain.EVALUATION, False,
                                 canonical=True)
    with pytest.raises(DomainMismatchError):
        ew_mac([(a, a), (a, plain)])
    with pytest.raises(ParameterError):
        ew_mac([])


def test_buffer_pool(toy_basis):
    pool = BufferPool(16, classes=[2, 8])
    assert pool.limb_class(1) == 2
    assert pool.limb_class(6) == 8
    assert pool.limb_class(9) is None
    p = Polynomial.zeros(toy_basis, pool=pool)
    assert pool.stats['live'] == 1
    p.release()
    again = Polynomial.zeros(toy_basis, pool=pool)
    stats = pool.stats
    assert stats['allocations'] == 1
    assert stats['acquires'] == 2
    assert stats['footprint_bytes'] == 8 * 16 * 4
    big = pool.acquire(20)
    assert big.shape == (20, 16)
    assert pool.stats['fallbacks'] == 1
    pool.release(big)
    again.release()
    with pytest.raises(PoolError):
        again.release()


def test_pool_rejects_foreign_buffer():
    pool = BufferPool(16, classes=[2])
    with pytest.raises(PoolError):
        pool.release(np.empty((2, 16), dtype=np.int32))


def test_serialization(toy_basis, rng):
    p = random_evaluation_poly(toy_basis, rng)
    data = p.to_bytes()
    assert len(data) == Polynomial.record_size(toy_basis)
    restored = Polynomial.from_bytes(data, toy_basis)
    assert restored.domain == Domain.EVALUATION and restored.mont
    assert np.array_equal(restored.limbs, p.limbs)
    with pytest.raises(SerializationError):
        Polynomial.from_bytes(data, toy_basis.q_view())
    with pytest.raises(SerializationError):
        Polynomial.from_bytes(data[:-4], toy_basis)
    with pytest.raises(SerializationError):
        Polynomial.from_bytes(b'XXXX' + data[4:], toy_basis)


def test_add_stage_rejects_mismatched_form(toy_basis, rng):
    x = random_evaluation_poly(toy_basis, rng)
    plain = Polynomial.from_wide(random_rows(toy_basis, rng), toy_basis, Domain.EVALUATION, False,
                                 canonical=True)
    with pytest.raises(DomainMismatchError):
        fuse([add_stage(plain)])(x)
