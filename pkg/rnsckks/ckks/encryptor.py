"""
Encryption and decryption with a secret key or a public key.
"""

import logging

from ..errors import LevelError, ParameterError
from ..poly import add_stage, fuse, mul_stage, neg_stage
from .ciphertext import Ciphertext, Plaintext, TensoredCiphertext
from .keys import PublicKey, SecretKey, error_poly, sample_uniform, sample_zero_one

logger = logging.getLogger(__name__)


def encrypt(context, pt, key, rng=None):
    """(b, a) = (-a*s + m + e, a) under a secret key, or the public-key variant

    The ciphertext inherits the plaintext's level and scale.
    """
    rng = rng or context.rng
    if pt.level > context.max_level:
        raise LevelError(f"Plaintext level {pt.level} exceeds the basis")
    basis = context.level_basis(pt.level)
    m = pt.poly if pt.poly.basis == basis else pt.poly.restrict(basis)
    if isinstance(key, SecretKey):
        a = sample_uniform(basis, rng)
        e = error_poly(context, basis, rng)
        b = fuse([mul_stage(key.at(basis)), neg_stage(), add_stage(m), add_stage(e)])(a)
        return Ciphertext(b, a, pt.scale, pt.level)
    if isinstance(key, PublicKey):
        v = context.from_integers(sample_zero_one(context.n, rng), basis)
        e0 = error_poly(context, basis, rng)
        e1 = error_poly(context, basis, rng)
        b = fuse([mul_stage(key.b.restrict(basis)), add_stage(m), add_stage(e0)])(v)
        a = fuse([mul_stage(key.a.restrict(basis)), add_stage(e1)])(v)
        return Ciphertext(b, a, pt.scale, pt.level)
    raise ParameterError(f"Cannot encrypt with {type(key).__name__}")


def decrypt(context, ct, sk):
    """m + e = b + a*s (or d0 + d1*s + d2*s^2 for tensored values)"""
    basis = ct.basis
    s = sk.at(basis)
    if isinstance(ct, TensoredCiphertext):
        inner = fuse([mul_stage(s), add_stage(ct.d1)])(ct.d2)
        poly = fuse([mul_stage(s), add_stage(ct.d0)])(inner)
    else:
        poly = fuse([mul_stage(s), add_stage(ct.b)])(ct.a)
    return Plaintext(poly, ct.scale, ct.level)
