import numpy as np
import pytest

from conftest import random_coefficient_poly, random_evaluation_poly
from rnsckks.automorphism import (CONJUGATE, apply_automorphism, apply_automorphism_inplace,
                                  automorphism_map, coefficient_automorphism, conjugation_map,
                                  galois_element, is_coalesced, map_index, natural_index)
from rnsckks.errors import DomainMismatchError, ParameterError
from rnsckks.instrument import counters
from rnsckks.ntt import ntt_forward
from rnsckks.poly import Domain, Polynomial


def test_galois_elements():
    assert galois_element(1, 16) == 5
    assert galois_element(3, 16) == 125 % 32
    assert galois_element(8, 16) == 1
    assert galois_element(CONJUGATE, 16) == 31


def test_natural_index():
    assert natural_index(0, 13, 8) == 6
    assert natural_index(3, 1, 8) == 3


@pytest.mark.parametrize('r', [1, 2, 3, 7, CONJUGATE])
def test_maps_are_bijections(r):
    amap = automorphism_map(r, 16)
    assert sorted(amap.dest.tolist()) == list(range(16))
    assert np.array_equal(amap.dest[amap.src], np.arange(16))
    assert [map_index(i, r, 16) for i in range(16)] == amap.dest.tolist()


def test_identity_rotations():
    assert automorphism_map(0, 16).is_identity
    assert automorphism_map(8, 16).is_identity
    assert np.array_equal(automorphism_map(8, 16).dest, np.arange(16))
    assert automorphism_map(0, 16).cycles == ()


def test_group_law(toy_basis, rng):
    p = random_evaluation_poly(toy_basis, rng)
    twice = apply_automorphism(apply_automorphism(p, 2), 3)
    assert np.array_equal(twice.limbs, apply_automorphism(p, 5).limbs)
    back = apply_automorphism(apply_automorphism(p, 3), 5)
    assert np.array_equal(back.limbs, p.limbs)
    conj = apply_automorphism(apply_automorphism(p, CONJUGATE), conjugation_map(16))
    assert np.array_equal(conj.limbs, p.limbs)


@pytest.mark.parametrize('r', [1, 3, 6, CONJUGATE])
def test_inplace_matches_gather(toy_basis, rng, r):
    p = random_evaluation_poly(toy_basis, rng)
    expected = apply_automorphism(p, r)
    q = p.copy()
    assert apply_automorphism_inplace(q, r) is q
    assert np.array_equal(q.limbs, expected.limbs)


@pytest.mark.parametrize('r', [1, 2, 5, CONJUGATE])
def test_coefficient_and_evaluation_forms_agree(toy_basis, toy_plan, rng, r):
    a = random_coefficient_poly(toy_basis, rng)
    via_coefficients = ntt_forward(coefficient_automorphism(a, r), toy_plan)
    via_evaluations = apply_automorphism(ntt_forward(a, toy_plan), r)
    assert via_coefficients.same_residues(via_evaluations)


def test_coefficient_automorphism_flips_signs(toy_basis):
    basis = toy_basis.q_view(1)
    q = basis.moduli[0]
    values = np.zeros((1, 16), dtype=np.int64)
    values[0, 4] = 1
    p = Polynomial.from_wide(values, basis, Domain.COEFFICIENT, canonical=True)
    # X^4 -> X^20 = -X^4
    out = coefficient_automorphism(p, 1)
    assert int(out.wide()[0, 4]) % q == q - 1


@pytest.mark.parametrize('r', [1, 3, 1 << 14])
def test_full_ring_rotations_stay_coalesced(r):
    assert is_coalesced(r, 1 << 16)


def test_small_blocks_are_coalesced():
    assert is_coalesced(1, 64, block=8)
    assert is_coalesced(CONJUGATE, 64, block=8)


def test_domain_and_ring_errors(toy_basis, rng):
    coefficient = random_coefficient_poly(toy_basis, rng)
    with pytest.raises(DomainMismatchError):
        apply_automorphism(coefficient, 1)
    with pytest.raises(DomainMismatchError):
        apply_automorphism_inplace(coefficient, 1)
    with pytest.raises(DomainMismatchError):
        coefficient_automorphism(random_evaluation_poly(toy_basis, rng), 1)
    with pytest.raises(ParameterError):
        automorphism_map(1, 12)


def test_counter(toy_basis, rng):
    p = random_evaluation_poly(toy_basis, rng)
    with counters.counting() as delta:
        apply_automorphism(p, 1)
        apply_automorphism_inplace(p, 1)
    assert delta['automorphism'] == 2
