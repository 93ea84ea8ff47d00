"""Shared fixtures: toy bases and contexts, seeded randomness, clean counters."""

import numpy as np
import pytest

from rnsckks.ckks import CkksContext, Encoder, generate_keyset, keygen
from rnsckks.config import reset_config, update_config
from rnsckks.instrument import counters
from rnsckks.ntt import build_plan
from rnsckks.poly import Domain, Polynomial
from rnsckks.rns import generate_basis

TOY_DELTA_BITS = 30


@pytest.fixture(autouse=True)
def debug_config():
    reset_config()
    update_config(debug_checks=True)
    counters.reset()
    yield
    reset_config()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope='session')
def toy_basis():
    """N=16, four Q primes near 2^15 and two P primes near 2^30"""
    return generate_basis(16, 4, 2, TOY_DELTA_BITS)


@pytest.fixture(scope='session')
def toy_plan(toy_basis):
    return build_plan(toy_basis)


@pytest.fixture(scope='session')
def small_context():
    """N=16, L=4, alpha=2: two gadget digits"""
    return CkksContext.create(16, 4, 2, TOY_DELTA_BITS, hamming_weight=8, seed=11)


@pytest.fixture(scope='session')
def context():
    """N=32 (16 slots), L=6, alpha=2: room for one multiplication plus decoding"""
    return CkksContext.create(32, 6, 2, TOY_DELTA_BITS, hamming_weight=16, seed=7)


@pytest.fixture(scope='session')
def secret_key(context):
    return keygen(context, rng=np.random.default_rng(99))


@pytest.fixture(scope='session')
def keyset(context, secret_key):
    return generate_keyset(context, secret_key, steps=range(1, 16), conjugation=True,
                           rng=np.random.default_rng(100))


@pytest.fixture(scope='session')
def encoder(context):
    return Encoder(context)


def random_rows(basis, rng):
    """Canonical residues over every prime of basis"""
    return np.stack([rng.integers(0, q, size=basis.n, dtype=np.int64) for q in basis.moduli])


def random_coefficient_poly(basis, rng):
    return Polynomial.from_wide(random_rows(basis, rng), basis, Domain.COEFFICIENT, False,
                                canonical=True)


def random_evaluation_poly(basis, rng):
    return Polynomial.from_wide(random_rows(basis, rng), basis, Domain.EVALUATION, True,
                                canonical=True)


def unit_disk(rng, count):
    radius = np.sqrt(rng.uniform(0, 1, count))
    angle = rng.uniform(0, 2 * np.pi, count)
    return radius * np.exp(1j * angle)
