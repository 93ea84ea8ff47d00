"""
Galois Automorphisms
====================
Slot rotations as column permutations of evaluation-domain polynomials.

For natural-order evaluations the rotation by R moves column i to

    phi_R(i) = (((2i + 1) * 5^-R mod 2N) - 1) / 2

and with bit-reversed storage the destination of stored column i is
brev(phi_R(brev(i))). Conjugation uses the Galois element 2N - 1.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainMismatchError, ParameterError
from .instrument import counters
from .ntt import bit_reverse, brev_indices
from .poly import Domain, Polynomial, Stage

logger = logging.getLogger(__name__)

COALESCE_BLOCK = 32
CONJUGATE = 'conj'


def galois_element(r, n):
    """5^R mod 2N, with R taken modulo the N/2 slot count"""
    if r == CONJUGATE:
        return 2 * n - 1
    return pow(5, r % (n // 2), 2 * n)


def natural_index(i, element, n):
    """Natural-order destination of column i under the inverse element"""
    return (((2 * i + 1) * element) % (2 * n) - 1) // 2


def map_index(i, r, n):
    """Destination of stored (bit-reversed) column i for rotation r"""
    bits = n.bit_length() - 1
    inverse = pow(galois_element(r, n), -1, 2 * n)
    return bit_reverse(natural_index(bit_reverse(i, bits), inverse, n), bits)


@dataclass(frozen=True)
class AutomorphismMap:
    """Precomputed permutation for one (r, N)

    dest[i] is where stored column i goes; src is the inverse permutation used for the
    gather out[:, j] = in[:, src[j]].
    """

    r: object
    n: int
    galois: int
    inverse_element: int
    dest: np.ndarray = field(repr=False)
    src: np.ndarray = field(repr=False)

    @property
    def is_identity(self):
        return self.galois == 1

    @property
    def cycles(self):
        return _cycles(self.r, self.n)


@lru_cache(maxsize=256)
def automorphism_map(r, n):
    """Cached permutation for rotation r (or CONJUGATE) at ring degree n"""
    if n < 4 or n & (n - 1):
        raise ParameterError(f"Ring degree {n} must be a power of two >= 4")
    g = galois_element(r, n)
    g_inv = pow(g, -1, 2 * n)
    brev = brev_indices(n)
    natural = natural_index(brev, g_inv, n)
    dest = brev[natural].copy()
    src = np.empty(n, dtype=np.int64)
    src[dest] = np.arange(n, dtype=np.int64)
    dest.setflags(write=False)
    src.setflags(write=False)
    return AutomorphismMap(r, n, g, g_inv, dest, src)


def conjugation_map(n):
    return automorphism_map(CONJUGATE, n)


@lru_cache(maxsize=64)
def _cycles(r, n):
    dest = automorphism_map(r, n).dest
    seen = np.zeros(n, dtype=bool)
    cycles = []
    for start in range(n):
        if seen[start] or dest[start] == start:
            seen[start] = True
            continue
        cycle = [start]
        seen[start] = True
        j = int(dest[start])
        while j != start:
            cycle.append(j)
            seen[j] = True
            j = int(dest[j])
        cycles.append(np.asarray(cycle, dtype=np.int64))
    return tuple(cycles)


def _resolve(r, n):
    return r if isinstance(r, AutomorphismMap) else automorphism_map(r, n)


def apply_automorphism(p, r, pool=None):
    """Out-of-place gather of evaluation-domain columns"""
    if p.domain != Domain.EVALUATION:
        raise DomainMismatchError("apply_automorphism expects an evaluation-domain polynomial "
                                  "(use coefficient_automorphism otherwise)")
    amap = _resolve(r, p.basis.n)
    out = Polynomial._allocate(p.basis, p.domain, p.mont, pool)
    np.take(p.limbs, amap.src, axis=1, out=out.limbs)
    out.canonical = p.canonical
    counters.add('automorphism')
    return out


def apply_automorphism_inplace(p, r):
    """Cycle-walk permutation; only one cycle is buffered at a time"""
    if p.domain != Domain.EVALUATION:
        raise DomainMismatchError(
            "apply_automorphism_inplace expects an evaluation-domain polynomial")
    amap = _resolve(r, p.basis.n)
    dest = amap.dest
    for cycle in amap.cycles:
        moved = p.limbs[:, cycle]
        p.limbs[:, dest[cycle]] = moved
    counters.add('automorphism')
    return p


def coefficient_automorphism(p, r, pool=None):
    """X -> X^g on a coefficient-domain polynomial, with negacyclic sign flips"""
    if p.domain != Domain.COEFFICIENT:
        raise DomainMismatchError(
            "coefficient_automorphism expects a coefficient-domain polynomial")
    n = p.basis.n
    g = galois_element(r, n)
    exps = (np.arange(n, dtype=np.int64) * g) % (2 * n)
    target = exps % n
    negate = exps >= n
    values = p.wide()
    values[:, negate] = -values[:, negate]
    out = np.empty_like(values)
    out[:, target] = values
    counters.add('automorphism')
    return Polynomial.from_wide(out, p.basis, p.domain, p.mont, pool=pool)


def is_coalesced(r, n, block=COALESCE_BLOCK):
    """True when every aligned block of stored columns lands in one aligned block"""
    dest = automorphism_map(r, n).dest.reshape(-1, block)
    high = dest // block
    if not np.all(high == high[:, :1]):
        return False
    low = np.sort(dest % block, axis=1)
    return bool(np.all(low == np.arange(block)))


def automorphism_stage(r):
    """Pipeline stage marker; column permutations cannot be fused element-wise"""
    return Stage('automorphism', r, element_aligned=False)
