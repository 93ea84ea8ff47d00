"""
Key Material
============
Ternary secrets, public keys and gadget-decomposed evaluation keys.

An evaluation key switching from s_from to s holds one pair per digit k of the
Q primes (runs of alpha consecutive primes):

    b_k = -a_k * s_under + e_k + P * E_k * s_from    (mod PQ)

where E_k is 1 modulo the digit's primes and 0 modulo every other Q prime.
Relinearization keys use s_from = s^2, s_under = s. Rotation keys for R use
s_from = s, s_under = phi_-R(s) because the automorphism is applied after KeyMult.
"""

import logging
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from ..automorphism import CONJUGATE, coefficient_automorphism
from ..errors import KeyKindError, MissingKeyError, ParameterError, SerializationError
from ..ntt import intt_inverse, ntt_forward
from ..poly import (Domain, Polynomial, add_stage, ew_mul, ew_mul_const, fuse, mul_stage,
                    neg_stage)
from .ciphertext import read_polys

logger = logging.getLogger(__name__)

KIND_RELIN = 'relin'
KIND_ROTATION = 'rotation'
KIND_CONJUGATION = 'conjugation'
_KIND_CODES = {KIND_RELIN: 0, KIND_ROTATION: 1, KIND_CONJUGATION: 2}

SECRET_MAGIC = b'RSKY'
PUBLIC_MAGIC = b'RPKY'
EVK_MAGIC = b'REVK'
KEY_VERSION = 1
_SECRET_HEADER = struct.Struct('<4sHII')
_PUBLIC_HEADER = struct.Struct('<4sH')
_EVK_HEADER = struct.Struct('<4sHBiH')

# Rounded Gaussian samples are cut at this many standard deviations
TAIL_CUT = 6


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_uniform(basis, rng):
    """Uniform evaluation-domain polynomial (uniform in either form, labelled Montgomery)"""
    rows = np.stack([rng.integers(0, q, size=basis.n, dtype=np.int64) for q in basis.moduli]) \
        if len(basis) else np.zeros((0, basis.n), dtype=np.int64)
    return Polynomial.from_wide(rows, basis, Domain.EVALUATION, True, canonical=True)


def sample_error(n, sigma, rng):
    """Rounded Gaussian coefficients with standard deviation sigma"""
    bound = int(np.ceil(TAIL_CUT * sigma))
    return np.clip(np.rint(rng.normal(0.0, sigma, size=n)), -bound, bound).astype(np.int64)


def sample_ternary(n, h, rng):
    """Exactly h coefficients in {-1, 1} at positions drawn by a Fisher-Yates shuffle"""
    if not 0 < h <= n:
        raise ParameterError(f"Hamming weight {h} must lie in [1, {n}]")
    coefficients = np.zeros(n, dtype=np.int64)
    positions = rng.permutation(n)[:h]
    coefficients[positions] = rng.choice(np.asarray([-1, 1], dtype=np.int64), size=h)
    return coefficients


def sample_zero_one(n, rng):
    """0 with probability 1/2, otherwise +-1"""
    return rng.choice(np.asarray([-1, 0, 0, 1], dtype=np.int64), size=n)


# ---------------------------------------------------------------------------
# Keys
# ---------------------------------------------------------------------------

@dataclass
class SecretKey:
    """Ternary secret; evaluation-domain residues are kept over the whole root basis"""

    coefficients: np.ndarray
    poly: Polynomial

    @property
    def hamming_weight(self):
        return int(np.count_nonzero(self.coefficients))

    def at(self, basis):
        """s restricted to basis (evaluation domain, Montgomery form)"""
        return self.poly.restrict(basis)

    def to_bytes(self):
        n = len(self.coefficients)
        return (_SECRET_HEADER.pack(SECRET_MAGIC, KEY_VERSION, n, self.hamming_weight)
                + self.coefficients.astype('<i1').tobytes())

    @classmethod
    def from_bytes(cls, data, context):
        if len(data) < _SECRET_HEADER.size:
            raise SerializationError("Secret key record too short")
        magic, version, n, h = _SECRET_HEADER.unpack_from(data)
        if magic != SECRET_MAGIC or version != KEY_VERSION:
            raise SerializationError(f"Unsupported secret key record {magic!r} v{version}")
        if n != context.n:
            raise SerializationError(f"Secret key for N={n} does not fit N={context.n}")
        body = data[_SECRET_HEADER.size:_SECRET_HEADER.size + n]
        if len(body) != n:
            raise SerializationError("Truncated secret key")
        coefficients = np.frombuffer(body, dtype='<i1').astype(np.int64)
        if np.any(np.abs(coefficients) > 1) or np.count_nonzero(coefficients) != h:
            raise SerializationError("Secret key is not ternary with the recorded weight")
        return cls(coefficients, context.from_integers(coefficients, context.basis))


@dataclass
class PublicKey:
    """(b, a) = (-a*s + e, a) over the full Q basis"""

    b: Polynomial
    a: Polynomial

    def to_bytes(self):
        header = _PUBLIC_HEADER.pack(PUBLIC_MAGIC, KEY_VERSION)
        return header + self.b.to_bytes() + self.a.to_bytes()

    @classmethod
    def from_bytes(cls, data, context):
        if len(data) < _PUBLIC_HEADER.size:
            raise SerializationError("Public key record too short")
        magic, version = _PUBLIC_HEADER.unpack_from(data)
        if magic != PUBLIC_MAGIC or version != KEY_VERSION:
            raise SerializationError(f"Unsupported public key record {magic!r} v{version}")
        (b, a), _ = read_polys(data, _PUBLIC_HEADER.size, context.level_basis(context.max_level), 2)
        return cls(b, a)


@dataclass
class EvaluationKey:
    """D digit pairs (b_k, a_k) over the full extended basis PQ"""

    kind: str
    rotation: object
    digits: tuple
    _views: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: object = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def dnum(self):
        return len(self.digits)

    def at_level(self, context, level):
        """Digit pairs restricted to the extended basis of level, cached"""
        with self._lock:
            view = self._views.get(level)
            if view is None:
                basis = context.extended_basis(level)
                count = len(context.digit_bases(level))
                view = tuple((b.restrict(basis), a.restrict(basis))
                             for b, a in self.digits[:count])
                self._views[level] = view
            return view

    def expect(self, kind, rotation=None):
        if self.kind != kind:
            raise KeyKindError(f"Expected a {kind} key, got {self.kind}")
        if kind == KIND_ROTATION and self.rotation != rotation:
            raise KeyKindError(f"Key rotates by {self.rotation}, not {rotation}")

    def to_bytes(self):
        rotation = self.rotation if isinstance(self.rotation, int) else 0
        header = _EVK_HEADER.pack(EVK_MAGIC, KEY_VERSION, _KIND_CODES[self.kind], rotation,
                                  self.dnum)
        return header + b''.join(b.to_bytes() + a.to_bytes() for b, a in self.digits)

    @classmethod
    def from_bytes(cls, data, context):
        if len(data) < _EVK_HEADER.size:
            raise SerializationError("Evaluation key record too short")
        magic, version, code, rotation, dnum = _EVK_HEADER.unpack_from(data)
        if magic != EVK_MAGIC or version != KEY_VERSION:
            raise SerializationError(f"Unsupported evaluation key record {magic!r} v{version}")
        kinds = {v: k for k, v in _KIND_CODES.items()}
        if code not in kinds:
            raise SerializationError(f"Unknown evaluation key kind {code}")
        kind = kinds[code]
        polys, _ = read_polys(data, _EVK_HEADER.size, context.basis, 2 * dnum)
        digits = tuple(zip(polys[0::2], polys[1::2]))
        return cls(kind, rotation if kind == KIND_ROTATION else
                   (CONJUGATE if kind == KIND_CONJUGATION else None), digits)


@dataclass
class KeySet:
    """Relinearization, rotation (by step) and conjugation keys"""

    relin: EvaluationKey = None
    rotations: dict = field(default_factory=dict)
    conjugation: EvaluationKey = None

    def relinearization_key(self):
        if self.relin is None:
            raise MissingKeyError("No relinearization key")
        return self.relin

    def rotation_key(self, r, slots):
        step = r % slots
        key = self.rotations.get(step)
        if key is None:
            raise MissingKeyError(f"No rotation key for step {step}")
        return key

    def has_rotation(self, r, slots):
        return r % slots in self.rotations

    def conjugation_key(self):
        if self.conjugation is None:
            raise MissingKeyError("No conjugation key")
        return self.conjugation

    @property
    def steps(self):
        return tuple(sorted(self.rotations))


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def error_poly(context, basis, rng):
    return context.from_integers(sample_error(context.n, context.params.sigma, rng), basis)


def keygen(context, h=None, rng=None):
    """Ternary secret of Hamming weight h (configured default when omitted)"""
    rng = rng or context.rng
    h = context.params.hamming_weight if h is None else h
    coefficients = sample_ternary(context.n, h, rng)
    logger.info(f"Secret key generated (N={context.n}, H={h})")
    return SecretKey(coefficients, context.from_integers(coefficients, context.basis))


def keygen_public(context, sk, rng=None):
    rng = rng or context.rng
    basis = context.level_basis(context.max_level)
    a = sample_uniform(basis, rng)
    e = error_poly(context, basis, rng)
    b = fuse([mul_stage(sk.at(basis)), neg_stage(), add_stage(e)])(a)
    logger.info("Public key generated")
    return PublicKey(b, a)


def _gadget_constants(context, k):
    """P * E_k modulo every prime of the root basis"""
    digit = set(context.digit_bases(context.max_level)[k].moduli)
    big_p = context.p_product
    return [big_p % q if q in digit else 0 for q in context.basis.moduli]


def evk_gen(context, sk, kind, rotation=None, rng=None):
    """Evaluation key of the given kind (relin, rotation by `rotation`, or conjugation)"""
    rng = rng or context.rng
    basis = context.basis
    s = sk.poly
    if kind == KIND_RELIN:
        s_from, s_under = ew_mul(s, s), s
    elif kind in (KIND_ROTATION, KIND_CONJUGATION):
        if kind == KIND_CONJUGATION:
            rotation, inverse = CONJUGATE, CONJUGATE
        else:
            if not isinstance(rotation, (int, np.integer)):
                raise ParameterError("Rotation keys need an integer rotation")
            rotation = int(rotation) % context.slots
            inverse = -rotation
        coeff = Polynomial.from_wide(np.remainder(sk.coefficients[None, :], basis.limb_constants.q),
                                     basis, Domain.COEFFICIENT, False, canonical=True)
        rotated = coefficient_automorphism(coeff, inverse)
        s_from, s_under = s, ntt_forward(rotated, context.plan)
    else:
        raise KeyKindError(f"Unknown evaluation key kind {kind!r}")

    digits = []
    for k in range(context.params.dnum):
        a = sample_uniform(basis, rng)
        e = error_poly(context, basis, rng)
        gadget = ew_mul_const(s_from, _gadget_constants(context, k))
        b = fuse([mul_stage(s_under), neg_stage(), add_stage(e), add_stage(gadget)])(a)
        digits.append((b, a))
    logger.info(f"Evaluation key generated: {kind}"
                + (f" ({rotation})" if rotation is not None else "")
                + f", D={len(digits)}")
    return EvaluationKey(kind, rotation if kind != KIND_RELIN else None, tuple(digits))


def rotation_keys(context, sk, steps, rng=None):
    """Rotation keys for every step, keyed by step modulo the slot count"""
    keys = {}
    for r in steps:
        step = int(r) % context.slots
        if step and step not in keys:
            keys[step] = evk_gen(context, sk, KIND_ROTATION, step, rng)
    return keys


def generate_keyset(context, sk, steps=(), conjugation=False, relin=True, rng=None):
    return KeySet(
        relin=evk_gen(context, sk, KIND_RELIN, rng=rng) if relin else None,
        rotations=rotation_keys(context, sk, steps, rng),
        conjugation=evk_gen(context, sk, KIND_CONJUGATION, rng=rng) if conjugation else None,
    )


def secret_coefficient_poly(context, sk, basis):
    """Coefficient-domain plain residues of s over basis (test and oracle helper)"""
    return intt_inverse(sk.at(basis), context.plan)
