import numpy as np
import pytest

from rnsckks.errors import ContractViolation, ParameterError
from rnsckks.modarith import (HALF_R, R, LimbConstants, PrimeContext, correct, fold, from_mont,
                              lazy_add, montgomery_constant, mont_mul, mont_reduce,
                              reference_reduce, to_mont)

PRIMES = [12289, 40961, 786433, 998244353]


@pytest.mark.parametrize('q', PRIMES)
def test_montgomery_constant(q):
    m = montgomery_constant(q)
    assert -HALF_R <= m < HALF_R
    assert (q * m) % R == 1


@pytest.mark.parametrize('q', PRIMES)
def test_mont_reduce_million_inputs(q):
    ctx = PrimeContext.create(q, 16)
    rng = np.random.default_rng(q)
    a = rng.integers(-q * HALF_R, q * HALF_R, size=1_000_000, dtype=np.int64)
    out = mont_reduce(a, ctx)
    assert np.all(np.abs(out) < q)
    r_inv = pow(R, -1, q)
    expected = reference_reduce(a, q) * r_inv % q
    assert np.array_equal(correct(out, q), expected)


@pytest.mark.parametrize('q', PRIMES)
def test_mont_mul_round_trip(q):
    ctx = PrimeContext.create(q, 16)
    rng = np.random.default_rng(7)
    a = rng.integers(-q + 1, q, size=10_000, dtype=np.int64)
    b = rng.integers(-q + 1, q, size=10_000, dtype=np.int64)
    product = from_mont(mont_mul(to_mont(a, ctx), to_mont(b, ctx), ctx), ctx)
    expected = reference_reduce(a.astype(object) * b.astype(object), q)
    assert np.array_equal(correct(product, q), expected)


@pytest.mark.parametrize('q', PRIMES)
def test_mont_form_is_a_bijection(q):
    ctx = PrimeContext.create(q, 16)
    values = np.arange(min(q, 50_000), dtype=np.int64)
    there = correct(to_mont(values, ctx), q)
    assert len(np.unique(there)) == len(values)
    assert np.array_equal(correct(from_mont(there, ctx), q), values)


def test_row_constants_broadcast():
    contexts = [PrimeContext.create(q, 16) for q in PRIMES]
    consts = LimbConstants.from_contexts(contexts)
    rng = np.random.default_rng(3)
    a = np.stack([rng.integers(0, q, size=32, dtype=np.int64) for q in PRIMES])
    b = np.stack([rng.integers(0, q, size=32, dtype=np.int64) for q in PRIMES])
    rows = mont_mul(a, b, consts)
    for i, ctx in enumerate(contexts):
        assert np.array_equal(rows[i], mont_mul(a[i], b[i], ctx))


def test_fold_and_correct():
    q = 12289
    a = np.asarray([-2 * q + 1, -q, -1, 0, q - 1, q, 2 * q - 1], dtype=np.int64)
    folded = fold(a, q)
    assert np.all(np.abs(folded) < q)
    assert np.array_equal(correct(folded, q), correct(a, q))
    assert np.all((correct(a, q) >= 0) & (correct(a, q) < q))


def test_lazy_add_contract():
    q = 12289
    a = np.full(4, q - 1, dtype=np.int64)
    assert np.array_equal(lazy_add(a, a, q, 2), 2 * a)
    with pytest.raises(ContractViolation):
        lazy_add(a, a, q, 1)


def test_mont_reduce_rejects_out_of_range_input():
    ctx = PrimeContext.create(12289, 16)
    with pytest.raises(ContractViolation):
        mont_reduce(np.asarray([12289 * HALF_R * 2], dtype=np.int64), ctx)


@pytest.mark.parametrize('q, n', [(12290, 16), (12289 + 2 * 16 * 3, 16), (1729, 8),
                                  (40961, 1 << 14), (1 << 31, 16)])
def test_prime_context_rejects_bad_moduli(q, n):
    with pytest.raises(ParameterError):
        PrimeContext.create(q, n)


def test_prime_context_constants():
    q = 998244353
    ctx = PrimeContext.create(q, 1 << 16)
    assert ctx.r2 == R * R % q
    assert ctx.n_inv_r * (1 << 16) % q == 1
