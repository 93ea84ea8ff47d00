"""
RNS Basis Management
====================
NTT-friendly prime generation, immutable RNS bases with Q/P role tags and
double-prime scale groups, and a big-integer CRT oracle.
"""

import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from sympy import isprime

from .config import get_config
from .errors import BasisMismatchError, ParameterError, PrimeExhaustionError, SerializationError
from .modarith import MAX_PRIME, R, LimbConstants, PrimeContext

logger = logging.getLogger(__name__)

BASIS_MAGIC = b'RNSB'
BASIS_VERSION = 1
_HEADER = struct.Struct('<4sHIHHH')

ROLE_Q = 'Q'
ROLE_P = 'P'


def prime_cap(alpha):
    """Exclusive upper bound for every prime of a basis with alpha auxiliary primes"""
    return min(R // max(1, alpha), MAX_PRIME)


def _scan_down(start, floor, step):
    """Primes = 1 mod step, scanning downward from start (inclusive) to floor"""
    x = start - ((start - 1) % step)
    while x >= floor:
        if isprime(x):
            yield x
        x -= step


def _scan_up(start, stop, step):
    """Primes = 1 mod step, scanning upward from start to stop (exclusive)"""
    x = start + ((1 - start) % step)
    while x < stop:
        if isprime(x):
            yield x
        x += step


class _PoolScanner:
    """Grows a candidate pool outward from the centre of the Q window"""

    def __init__(self, step, center, floor, ceiling, exclude):
        self._down = _scan_down(center - 1, floor, step)
        self._up = (p for p in _scan_up(center, ceiling, step) if p not in exclude)
        self.lows = []
        self.highs = []
        self.low_done = False
        self.high_done = False

    def _extend(self, target):
        while not self.low_done and len(self.lows) < target:
            p = next(self._down, None)
            if p is None:
                self.low_done = True
            else:
                self.lows.append(p)
        while not self.high_done and len(self.highs) < target:
            p = next(self._up, None)
            if p is None:
                self.high_done = True
            else:
                self.highs.append(p)

    def pool(self, target):
        self._extend(target)
        return self.lows[:target] + self.highs[:target]

    def exhausted(self, target):
        return (self.low_done and len(self.lows) <= target
                and self.high_done and len(self.highs) <= target)


def _window(delta_bits, slack):
    lo = math.ceil(2.0 ** (delta_bits - 1 - slack))
    hi = math.floor(2.0 ** (delta_bits + 1 + slack))
    return lo, hi


def _take_partner(candidates, used, lo, hi, s):
    """Smallest unused candidate b with lo <= s*b < hi (candidates ascending)"""
    need = -(-lo // s)
    for b in candidates:
        if b < need or b in used or b == s:
            continue
        if s * b >= hi:
            return None
        return b
    return None


def _pair_primes(pool, delta_bits, slack):
    """Greedy pairing into products inside the widened [D/2, 2D) window

    Primes below sqrt(hi) are taken largest first and matched with the smallest
    admissible partner, preferring partners above sqrt(hi).
    """
    lo, hi = _window(delta_bits, slack)
    root = math.isqrt(hi)
    small = sorted((p for p in pool if p <= root), reverse=True)
    big = sorted(p for p in pool if p > root)
    used = set()
    pairs = []
    for s in small:
        if s in used:
            continue
        b = _take_partner(big, used, lo, hi, s)
        if b is None:
            continue
        used.update((s, b))
        pairs.append((s, b))
    leftovers = sorted(p for p in small if p not in used)
    for s in reversed(leftovers):
        if s in used:
            continue
        b = _take_partner(leftovers, used, lo, hi, s)
        if b is None:
            continue
        used.update((s, b))
        pairs.append((min(s, b), max(s, b)))
    return pairs


def _achieved_slack(q_primes, delta_bits):
    slack = 0.0
    for a, b in zip(q_primes[0::2], q_primes[1::2]):
        bits = math.log2(a * b)
        slack = max(slack, bits - (delta_bits + 1), (delta_bits - 1) - bits)
    return max(0.0, slack)


@dataclass(frozen=True)
class RnsBasis:
    """Ordered NTT-friendly primes with Q/P roles

    The root basis holds all Q primes (main modulus, paired into double-prime scale
    groups) followed by all P primes (key-switching auxiliary modulus). Level drops and
    key-switching extensions are views: smaller RnsBasis values over a subset of the
    same primes.
    """

    n: int
    contexts: tuple
    roles: tuple
    delta_bits: int
    group_slack_bits: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if len(self.contexts) != len(self.roles):
            raise ParameterError("Every prime needs a role tag")
        if len({c.q for c in self.contexts}) != len(self.contexts):
            raise ParameterError("Basis primes must be distinct")

    def __len__(self):
        return len(self.contexts)

    @cached_property
    def moduli(self):
        return tuple(c.q for c in self.contexts)

    @property
    def l(self):
        return self.roles.count(ROLE_Q)

    @property
    def alpha(self):
        return self.roles.count(ROLE_P)

    @cached_property
    def limb_constants(self):
        return LimbConstants.from_contexts(self.contexts)

    @cached_property
    def _index(self):
        return {q: i for i, q in enumerate(self.moduli)}

    def index_of(self, q):
        try:
            return self._index[q]
        except KeyError:
            raise BasisMismatchError(f"Prime {q} is not part of this basis") from None

    def indices_of(self, other):
        """Row indices of other's primes inside this basis"""
        return np.asarray([self.index_of(q) for q in other.moduli], dtype=np.intp)

    def contains(self, other):
        return all(q in self._index for q in other.moduli)

    @cached_property
    def q_contexts(self):
        return tuple(c for c, r in zip(self.contexts, self.roles) if r == ROLE_Q)

    @cached_property
    def p_contexts(self):
        return tuple(c for c, r in zip(self.contexts, self.roles) if r == ROLE_P)

    def _view(self, contexts, roles):
        return RnsBasis(self.n, tuple(contexts), tuple(roles), self.delta_bits,
                        self.group_slack_bits)

    def q_view(self, level=None):
        """First `level` Q primes"""
        level = self.l if level is None else level
        if not 0 <= level <= self.l:
            raise ParameterError(f"Level {level} outside [0, {self.l}]")
        return self._view(self.q_contexts[:level], (ROLE_Q,) * level)

    def p_view(self):
        return self._view(self.p_contexts, (ROLE_P,) * self.alpha)

    def extended_view(self, level=None):
        """Q prefix of length `level` followed by every P prime"""
        q = self.q_view(level)
        return self._view(q.contexts + self.p_contexts,
                          q.roles + (ROLE_P,) * self.alpha)

    def sub_basis(self, primes):
        """View over the given primes, in the given order"""
        idx = [self.index_of(q) for q in primes]
        return self._view([self.contexts[i] for i in idx], [self.roles[i] for i in idx])

    def without(self, other):
        """View over the primes of this basis that are not in other"""
        drop = set(other.moduli)
        return self.sub_basis([q for q in self.moduli if q not in drop])

    @property
    def delta_groups(self):
        """Index pairs of consecutive Q primes forming double-prime scale groups"""
        return tuple((i, i + 1) for i in range(0, self.l - 1, 2))

    def group_product(self, level):
        """Product of the group dropped when rescaling from `level`"""
        if level < 2 or level > self.l:
            raise ParameterError(f"No droppable group at level {level}")
        return self.q_contexts[level - 2].q * self.q_contexts[level - 1].q

    def product(self):
        return math.prod(self.moduli)

    def to_bytes(self):
        header = _HEADER.pack(BASIS_MAGIC, BASIS_VERSION, self.n, self.l, self.alpha,
                              self.delta_bits)
        ordered = [c.q for c in self.q_contexts] + [c.q for c in self.p_contexts]
        return header + np.asarray(ordered, dtype='<u4').tobytes()

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEADER.size:
            raise SerializationError("Basis record too short")
        magic, version, n, l, alpha, delta_bits = _HEADER.unpack_from(data)
        if magic != BASIS_MAGIC or version != BASIS_VERSION:
            raise SerializationError(f"Unsupported basis record {magic!r} v{version}")
        count = l + alpha
        body = data[_HEADER.size:_HEADER.size + 4 * count]
        if len(body) != 4 * count:
            raise SerializationError("Truncated basis prime list")
        primes = np.frombuffer(body, dtype='<u4').astype(np.int64).tolist()
        return cls.from_primes(n, primes[:l], primes[l:], delta_bits)

    @classmethod
    def from_primes(cls, n, q_primes, p_primes, delta_bits):
        contexts = tuple(PrimeContext.create(int(q), n) for q in list(q_primes) + list(p_primes))
        roles = (ROLE_Q,) * len(q_primes) + (ROLE_P,) * len(p_primes)
        return cls(n, contexts, roles, delta_bits, _achieved_slack(list(q_primes), delta_bits))

    @cached_property
    def basis_hash(self):
        digest = hashlib.sha256(self.to_bytes())
        digest.update(''.join(self.roles).encode())
        digest.update(np.asarray(self.moduli, dtype='<u4').tobytes())
        return digest.hexdigest()


def generate_basis(n, l, alpha, delta_bits, slack_step_bits=None, slack_max_bits=None):
    """Deterministic basis of l Q primes (paired around 2^delta_bits) and alpha P primes

    P primes are the largest NTT-friendly primes below min(2^32/alpha, 2^30). Q primes
    are gathered outward from 2^ceil(delta_bits/2) and paired so each group product lands
    in [D/2, 2D). If that window cannot hold l/2 groups the window is widened
    symmetrically in small steps; the achieved slack is recorded on the basis.
    """
    if n < 2 or n & (n - 1):
        raise ParameterError(f"Ring degree {n} must be a power of two")
    if l < 0 or l % 2:
        raise ParameterError(f"Q prime count {l} must be even (double-prime groups)")
    if alpha < 1:
        raise ParameterError("At least one auxiliary prime is required")

    config = get_config()
    step_bits = config['group_slack_step_bits'] if slack_step_bits is None else slack_step_bits
    max_bits = config['group_slack_max_bits'] if slack_max_bits is None else slack_max_bits
    step = 2 * n
    ceiling = prime_cap(alpha)
    candidates = (ceiling - step) // step
    if l + alpha > candidates:
        raise PrimeExhaustionError(
            f"{l + alpha} primes requested but only {candidates} candidates = 1 mod {step} "
            f"lie below {ceiling}")

    p_primes = []
    for p in _scan_down(ceiling - 1, step + 1, step):
        p_primes.append(p)
        if len(p_primes) == alpha:
            break
    if len(p_primes) < alpha:
        raise PrimeExhaustionError(f"Only {len(p_primes)} auxiliary primes below {ceiling}")

    groups = l // 2
    q_primes = []
    slack = 0.0
    if groups:
        if 2 * math.log2(ceiling) < delta_bits - 1 - max_bits:
            raise PrimeExhaustionError(
                f"Primes below {ceiling} cannot form products near 2^{delta_bits}")
        center = min(1 << math.ceil(delta_bits / 2), ceiling)
        floor = max(step + 1, math.ceil(2.0 ** (delta_bits - 1 - max_bits) / ceiling))
        scanner = _PoolScanner(step, center, floor, ceiling, set(p_primes))
        pairs = None
        while slack <= max_bits + 1e-9:
            target = max(8, l)
            while True:
                found = _pair_primes(scanner.pool(target), delta_bits, slack)
                if len(found) >= groups:
                    pairs = found
                    break
                if scanner.exhausted(target):
                    break
                target *= 2
            if pairs is not None:
                break
            slack += step_bits
        if pairs is None:
            raise PrimeExhaustionError(
                f"Cannot form {groups} double-prime groups near 2^{delta_bits} "
                f"within {max_bits} bits of slack")
        pairs.sort(key=lambda pair: (abs(math.log2(pair[0] * pair[1]) - delta_bits), pair))
        for a, b in pairs[:groups]:
            q_primes.extend((a, b))
        if slack > 0:
            logger.warning(f"Scale-group window widened by {slack} bits to fit {groups} groups "
                           f"at N={n}, delta=2^{delta_bits}")

    basis = RnsBasis.from_primes(n, q_primes, p_primes, delta_bits)
    logger.info(f"Generated basis N={n} L={l} alpha={alpha} delta_bits={delta_bits} "
                f"(slack {basis.group_slack_bits:.3f} bits)")
    return basis


def crt_reconstruct(residues, basis, centered=False):
    """Big-integer values from per-prime residues

    residues has shape (L,) or (L, N); the result is a Python int or an object array of
    Python ints in [0, prod q) (or the centred interval when requested).
    """
    moduli = basis.moduli
    rows = np.asarray(residues)
    if rows.shape[0] != len(moduli):
        raise BasisMismatchError(f"{rows.shape[0]} residue rows for {len(moduli)} primes")
    big_q = math.prod(moduli)
    half = big_q // 2
    if rows.ndim == 1:
        value = sum(int(r) % q * _crt_coefficient(big_q, q) for q, r in zip(moduli, rows)) % big_q
        return value - big_q if centered and value > half else value
    acc = np.zeros(rows.shape[1:], dtype=object)
    for q, row in zip(moduli, rows):
        acc = acc + (row.astype(object) % q) * _crt_coefficient(big_q, q)
    value = acc % big_q
    if centered:
        value = np.where(value > half, value - big_q, value)
    return value


def _crt_coefficient(big_q, q):
    q_hat = big_q // q
    return q_hat * pow(q_hat, -1, q)


def crt_decompose(value, basis):
    """Per-prime canonical residues of big-integer values (int or sequence)"""
    if isinstance(value, (int, np.integer)):
        return np.asarray([int(value) % q for q in basis.moduli], dtype=np.int64)
    wide = np.asarray(value, dtype=object)
    return np.stack([(wide % q).astype(np.int64) for q in basis.moduli])
