"""
Prime-Field Arithmetic
======================
Signed 32-bit Montgomery arithmetic for NTT-friendly primes.

Residues are carried in numpy int64 arrays but always hold signed 32-bit values:
lazy residues live in (-q, q), canonical ones in [0, q). Every function accepts a
``ctx`` that exposes ``q`` and ``m`` (and ``r2`` where needed) either as Python ints
(``PrimeContext``) or as broadcastable per-row arrays (``LimbConstants``), so the same
code path serves one prime or a whole L x N residue matrix.
"""

import logging
from dataclasses import dataclass

import numpy as np
from sympy import isprime

from .config import debug_checks_enabled
from .errors import ContractViolation, ParameterError

logger = logging.getLogger(__name__)

R_BITS = 32
R = 1 << R_BITS
MASK32 = R - 1
HALF_R = 1 << 31
MAX_PRIME = 1 << 30


def montgomery_constant(q):
    """Signed m with q * m = 1 mod 2^32"""
    m = pow(q, -1, R)
    return m - R if m >= HALF_R else m


@dataclass(frozen=True)
class PrimeContext:
    """Per-prime constants for signed Montgomery arithmetic

    n_inv_r holds N^-1 mod q. Applied with ``mont_mul`` to a Montgomery-form value it
    yields plain x * N^-1: the R^-1 of the reduction removes the form for free.
    """

    q: int
    m: int
    r2: int
    r_mod: int
    n: int
    n_inv_r: int

    @classmethod
    def create(cls, q, n):
        if q % 2 == 0 or q >= HALF_R:
            raise ParameterError(f"Modulus {q} must be odd and below 2^31")
        if (q - 1) % (2 * n) != 0:
            raise ParameterError(f"Modulus {q} is not 1 mod 2N for N={n}")
        if not isprime(q):
            raise ParameterError(f"Modulus {q} is not prime")
        return cls(q=q, m=montgomery_constant(q), r2=R * R % q, r_mod=R % q,
                   n=n, n_inv_r=pow(n, -1, q))


@dataclass(frozen=True)
class LimbConstants:
    """Row-aligned constants of an RNS basis, shaped (L, 1) for broadcasting"""

    q: np.ndarray
    m: np.ndarray
    r2: np.ndarray

    @classmethod
    def from_contexts(cls, contexts):
        def column(values):
            return np.asarray(values, dtype=np.int64).reshape(-1, 1)
        return cls(q=column([c.q for c in contexts]),
                   m=column([c.m for c in contexts]),
                   r2=column([c.r2 for c in contexts]))

    def rows(self, index):
        """Constants for a subset of rows (index array or slice)"""
        return LimbConstants(q=self.q[index], m=self.m[index], r2=self.r2[index])

    def expand(self, ndim):
        """Reshape to (L, 1, ..., 1) with ndim axes in total"""
        shape = (-1,) + (1,) * (ndim - 1)
        return LimbConstants(q=self.q.reshape(shape), m=self.m.reshape(shape),
                             r2=self.r2.reshape(shape))


def check_range(a, bound, what):
    """Raise ContractViolation when any |a| reaches bound (debug builds only)"""
    if np.any(np.abs(np.asarray(a, dtype=np.int64)) >= bound):
        raise ContractViolation(f"{what}: value outside the allowed range")


def mont_reduce(a, ctx):
    """Signed Montgomery reduction: a * 2^-32 mod q, result in (-q, q)

    Input must lie in [-q * 2^31, q * 2^31). The low-half product t = a * m mod 2^32
    is formed from 16-bit halves of m so nothing exceeds 2^49 in int64.
    """
    a = np.asarray(a, dtype=np.int64)
    q = ctx.q
    if debug_checks_enabled():
        check_range(a, np.asarray(q, dtype=np.int64) * HALF_R + 1, 'mont_reduce input')
    m = np.asarray(ctx.m, dtype=np.int64) & MASK32
    lo = a & MASK32
    t = (lo * (m & 0xFFFF) + (((lo * (m >> 16)) & 0xFFFF) << 16)) & MASK32
    t = ((t + HALF_R) & MASK32) - HALF_R
    return (a >> R_BITS) - ((t * q) >> R_BITS)


def mont_mul(a, b, ctx):
    """a * b * 2^-32 mod q in (-q, q); requires |a * b| < q * 2^31"""
    return mont_reduce(np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64), ctx)


def to_mont(a, ctx):
    """Enter Montgomery form: a * 2^32 mod q (lazy)"""
    return mont_mul(a, ctx.r2, ctx)


def from_mont(a, ctx):
    """Leave Montgomery form: a * 2^-32 mod q (lazy)"""
    return mont_reduce(a, ctx)


def lazy_add(a, b, q=None, k=None):
    """a + b without reduction

    When q and k are given and debug checks are on, asserts |a + b| < k * q so callers
    can verify their accumulated magnitude bound.
    """
    out = np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64)
    if q is not None and k is not None and debug_checks_enabled():
        check_range(out, np.asarray(q, dtype=np.int64) * k, 'lazy_add accumulator')
    return out


def fold(a, q):
    """Map (-2q, 2q) to (-q, q) with one conditional correction"""
    a = np.asarray(a, dtype=np.int64)
    return np.where(a >= q, a - q, np.where(a <= -q, a + q, a))


def correct(a, q):
    """Canonical representative in [0, q)

    Accepts any int64 value, i.e. lazy sums of up to k = 2^32 residues of magnitude
    below 2^31.
    """
    return np.remainder(np.asarray(a, dtype=np.int64), q)


def reference_reduce(a, q):
    """a mod q by wide-integer division; slow test oracle"""
    if np.isscalar(a) or isinstance(a, int):
        return int(a) % int(q)
    wide = np.asarray(a).astype(object) % int(q)
    return wide.astype(np.int64)
