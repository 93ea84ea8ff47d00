import numpy as np
import pytest

from conftest import random_coefficient_poly, random_evaluation_poly
from rnsckks.errors import DomainMismatchError, ParameterError
from rnsckks.instrument import counters
from rnsckks.modarith import R, correct
from rnsckks.ntt import (NttParams, bit_reverse, brev_indices, build_plan, intt_inverse,
                         ntt_forward, primitive_root)
from rnsckks.poly import Domain, Polynomial, ew_mul, ew_mul_const
from rnsckks.rns import generate_basis


def negacyclic_product(a, b, q):
    """Schoolbook a * b mod (X^N + 1, q) for one limb"""
    n = len(a)
    terms = np.outer(a, b) % q
    full = np.zeros(2 * n, dtype=np.int64)
    i, j = np.indices((n, n))
    np.add.at(full, (i + j).ravel(), terms.ravel())
    return (full[:n] - full[n:]) % q


def test_bit_reverse():
    assert [bit_reverse(i, 3) for i in range(8)] == [0, 4, 2, 6, 1, 5, 3, 7]
    assert list(brev_indices(8)) == [0, 4, 2, 6, 1, 5, 3, 7]


def test_primitive_root():
    q = 12289
    psi = primitive_root(q, 16)
    assert pow(psi, 16, q) == q - 1
    assert pow(psi, 32, q) == 1


@pytest.mark.parametrize('n', [16, 64, 256])
def test_transform_multiplies_negacyclically(n):
    basis = generate_basis(n, 4, 2, 40)
    plan = build_plan(basis)
    rng = np.random.default_rng(n)
    for _ in range(100):
        a = random_coefficient_poly(basis, rng)
        b = random_coefficient_poly(basis, rng)
        c = intt_inverse(ew_mul(ntt_forward(a, plan), ntt_forward(b, plan)), plan)
        assert c.domain == Domain.COEFFICIENT and not c.mont and c.canonical
        for i, q in enumerate(basis.moduli):
            expected = negacyclic_product(a.wide()[i], b.wide()[i], q)
            assert np.array_equal(c.wide()[i], expected)


def test_round_trip_is_identity(toy_basis, toy_plan, rng):
    a = random_coefficient_poly(toy_basis, rng)
    back = intt_inverse(ntt_forward(a, toy_plan), toy_plan)
    assert np.array_equal(back.limbs, a.limbs)


def test_forward_evaluates_at_odd_powers_in_bit_reversed_order(toy_basis, toy_plan, rng):
    a = random_coefficient_poly(toy_basis, rng)
    out = ntt_forward(a, toy_plan)
    assert out.domain == Domain.EVALUATION and out.mont
    n = toy_basis.n
    bits = n.bit_length() - 1
    stored = correct(out.wide(), toy_basis.limb_constants.q)
    for row, q in enumerate(toy_basis.moduli):
        psi = primitive_root(q, n)
        r_inv = pow(R, -1, q)
        coeffs = [int(v) for v in a.wide()[row]]
        for i in range(n):
            e = 2 * bit_reverse(i, bits) + 1
            value = sum(c * pow(psi, e * j, q) for j, c in enumerate(coeffs)) % q
            assert int(stored[row, i]) * r_inv % q == value


def _variants(n):
    return [
        dict(n1=16, n2=16, g1=4, g2=4, b_k1=4, ot_enabled=False, lsb_size=16),
        dict(n1=16, n2=16, g1=2, g2=16, b_k1=2, ot_enabled=True, lsb_size=16),
        dict(n1=2, n2=128, g1=2, g2=8, b_k1=1, ot_enabled=True, lsb_size=32),
        dict(n1=128, n2=2, g1=8, g2=2, b_k1=2, ot_enabled=True, lsb_size=4),
        dict(n1=64, n2=4, g1=64, g2=4, b_k1=4, ot_enabled=False, lsb_size=256),
        dict(n1=32, n2=8, g1=4, g2=2, b_k1=8, ot_enabled=True, lsb_size=2),
    ]


def test_plan_variants_are_bit_exact():
    basis = generate_basis(256, 4, 2, 40)
    rng = np.random.default_rng(5)
    reference = build_plan(basis, n1=16, n2=16, g1=16, g2=16, b_k1=16, ot_enabled=False)
    a = random_coefficient_poly(basis, rng)
    e = random_evaluation_poly(basis, rng)
    forward = ntt_forward(a, reference)
    inverse = intt_inverse(e, reference)
    for kw in _variants(256):
        plan = build_plan(basis, **kw)
        assert np.array_equal(ntt_forward(a, plan).limbs, forward.limbs), kw
        assert np.array_equal(intt_inverse(e, plan).limbs, inverse.limbs), kw


def test_sub_basis_uses_matching_table_rows(toy_basis, toy_plan, rng):
    q2 = toy_basis.q_view(2)
    sparse = toy_basis.sub_basis([toy_basis.moduli[5], toy_basis.moduli[1]])
    a = random_coefficient_poly(toy_basis, rng)
    full = ntt_forward(a, toy_plan)
    assert np.array_equal(ntt_forward(a.restrict(q2), toy_plan).limbs,
                          full.restrict(q2).limbs)
    assert np.array_equal(ntt_forward(a.restrict(sparse), toy_plan).limbs,
                          full.restrict(sparse).limbs)


def test_exit_scale_is_folded_into_last_stage(toy_basis, toy_plan, rng):
    e = random_evaluation_poly(toy_basis, rng)
    scale = [3, 1000, 7, 123456, 2, 99991]
    scaled = intt_inverse(e, toy_plan, exit_scale=scale)
    assert scaled.canonical
    assert scaled.same_residues(ew_mul_const(intt_inverse(e, toy_plan), scale))


def test_domain_discipline(toy_basis, toy_plan, rng):
    coefficient = random_coefficient_poly(toy_basis, rng)
    evaluation = random_evaluation_poly(toy_basis, rng)
    with pytest.raises(DomainMismatchError):
        ntt_forward(evaluation, toy_plan)
    with pytest.raises(DomainMismatchError):
        ntt_forward(Polynomial.from_wide(coefficient.wide(), toy_basis, Domain.COEFFICIENT,
                                         mont=True), toy_plan)
    with pytest.raises(DomainMismatchError):
        intt_inverse(coefficient, toy_plan)
    with pytest.raises(DomainMismatchError):
        intt_inverse(Polynomial.from_wide(evaluation.wide(), toy_basis, Domain.EVALUATION,
                                          mont=False), toy_plan)
    other = generate_basis(32, 4, 2, 30)
    with pytest.raises(DomainMismatchError):
        ntt_forward(random_coefficient_poly(other, rng), toy_plan)


@pytest.mark.parametrize('params', [
    NttParams(8, 4, 2, 2, 2),
    NttParams(3, 5, 2, 2, 1),
    NttParams(1, 16, 1, 4, 1),
    NttParams(4, 4, 8, 2, 2),
    NttParams(4, 4, 2, 2, 8),
    NttParams(4, 4, 2, 2, 2, lsb_size=32),
    NttParams(4, 4, 2, 2, 2, lsb_size=3),
])
def test_invalid_params(params):
    with pytest.raises(ParameterError):
        params.validate(16)


def test_default_params_fall_back_to_a_balanced_split():
    params = NttParams.default(16)
    assert (params.n1, params.n2, params.g1, params.g2, params.b_k1) == (4, 4, 4, 4, 4)
    assert params.lsb_size == 16
    params.validate(16)
    full = NttParams.default(1 << 16)
    assert (full.n1, full.n2) == (128, 512)


def test_plan_over_several_primes_round_trips(rng):
    basis = generate_basis(16, 2, 1, 40)
    assert len(basis) >= 3
    plan = build_plan(basis)
    a = random_coefficient_poly(basis, rng)
    forward = ntt_forward(a, plan)
    assert intt_inverse(forward, plan).same_residues(a)

    # every row transforms as it would over its own prime
    for i, q in enumerate(basis.moduli):
        single = basis.sub_basis([q])
        row = Polynomial(a.limbs[i:i + 1].copy(), single, Domain.COEFFICIENT, False,
                         canonical=True)
        alone = ntt_forward(row, build_plan(single))
        assert np.array_equal(forward.wide()[i] % q, alone.wide()[0] % q)


def test_counters(toy_basis, toy_plan, rng):
    a = random_coefficient_poly(toy_basis, rng)
    with counters.counting() as delta:
        intt_inverse(ntt_forward(a, toy_plan), toy_plan)
        ntt_forward(a, toy_plan)
    assert delta['ntt'] == 2
    assert delta['intt'] == 1


@pytest.mark.slow
def test_full_scale_plans_agree():
    basis = generate_basis(1 << 16, 4, 2, 48)
    rng = np.random.default_rng(1)
    inputs = [(random_coefficient_poly(basis, rng), random_evaluation_poly(basis, rng))
              for _ in range(10)]
    reference = build_plan(basis)
    expected = [(ntt_forward(a, reference), intt_inverse(e, reference)) for a, e in inputs]
    configs = [(n1, n2, g, ot) for n1, n2 in [(64, 1024), (128, 512), (256, 256)]
               for g in (8, 16) for ot in (False, True)]
    for n1, n2, g, ot in configs:
        plan = build_plan(basis, n1=n1, n2=n2, g1=g, g2=g, ot_enabled=ot)
        for (a, e), (forward, inverse) in zip(inputs, expected):
            assert np.array_equal(ntt_forward(a, plan).limbs, forward.limbs)
            assert np.array_equal(intt_inverse(e, plan).limbs, inverse.limbs)
            assert intt_inverse(forward, plan).same_residues(a)
