"""
CKKS Values
===========
Plaintexts, ciphertexts and tensored (not yet relinearized) ciphertexts, with
versioned little-endian serialization built on the polynomial record format.

Scales are exact rationals: a double-prime group product is not a power of two,
so scales after a rescale are carried as Fractions.
"""

import math
import struct
from dataclasses import dataclass
from fractions import Fraction

from ..errors import BasisMismatchError, DomainMismatchError, SerializationError
from ..poly import Polynomial

PLAINTEXT_MAGIC = b'RPTX'
CIPHERTEXT_MAGIC = b'RCTX'
TENSOR_MAGIC = b'RTNS'
VALUE_VERSION = 1
_HEADER = struct.Struct('<4sHHB')
_LENGTH = struct.Struct('<I')


def pack_scale(scale):
    """Length-prefixed numerator and denominator"""
    scale = Fraction(scale)
    out = b''
    for part in (scale.numerator, scale.denominator):
        raw = part.to_bytes(max(1, (part.bit_length() + 7) // 8), 'little')
        out += _LENGTH.pack(len(raw)) + raw
    return out


def unpack_scale(data, offset):
    parts = []
    for _ in range(2):
        if offset + _LENGTH.size > len(data):
            raise SerializationError("Truncated scale")
        (size,) = _LENGTH.unpack_from(data, offset)
        offset += _LENGTH.size
        raw = data[offset:offset + size]
        if len(raw) != size:
            raise SerializationError("Truncated scale")
        parts.append(int.from_bytes(raw, 'little'))
        offset += size
    if parts[1] == 0:
        raise SerializationError("Scale denominator is zero")
    return Fraction(parts[0], parts[1]), offset


def read_polys(data, offset, basis, count):
    """count consecutive polynomial records over basis"""
    size = Polynomial.record_size(basis)
    polys = []
    for _ in range(count):
        chunk = data[offset:offset + size]
        if len(chunk) != size:
            raise SerializationError("Truncated polynomial record")
        polys.append(Polynomial.from_bytes(chunk, basis))
        offset += size
    return polys, offset


def _check_pair(polys):
    first = polys[0]
    for p in polys[1:]:
        if p.basis != first.basis:
            raise BasisMismatchError("Ciphertext parts live over different bases")
        if p.domain != first.domain or p.mont != first.mont:
            raise DomainMismatchError("Ciphertext parts disagree on domain or Montgomery form")


def _pack(magic, level, flag, scale, polys):
    return (_HEADER.pack(magic, VALUE_VERSION, level, flag) + pack_scale(scale)
            + b''.join(p.to_bytes() for p in polys))


def _unpack(data, magic, context, count, extended=False):
    if len(data) < _HEADER.size:
        raise SerializationError("Record too short")
    found, version, level, flag = _HEADER.unpack_from(data)
    if found != magic or version != VALUE_VERSION:
        raise SerializationError(f"Expected {magic!r} v{VALUE_VERSION}, got {found!r} v{version}")
    scale, offset = unpack_scale(data, _HEADER.size)
    context.check_level(level)
    basis = context.extended_basis(level) if extended else context.level_basis(level)
    polys, _ = read_polys(data, offset, basis, count)
    return level, flag, scale, polys


@dataclass
class Plaintext:
    """Encoded message over a Q prefix (or its P extension)"""

    poly: Polynomial
    scale: Fraction
    level: int

    @property
    def extended(self):
        return self.poly.basis.alpha > 0

    def to_bytes(self):
        return _pack(PLAINTEXT_MAGIC, self.level, int(self.extended), self.scale, [self.poly])

    @classmethod
    def from_bytes(cls, data, context):
        header = _HEADER.unpack_from(data) if len(data) >= _HEADER.size else None
        extended = bool(header and header[3])
        level, _, scale, (poly,) = _unpack(data, PLAINTEXT_MAGIC, context, 1, extended)
        return cls(poly, scale, level)


@dataclass
class Ciphertext:
    """(b, a) with b + a*s = m + e, both evaluation-domain Montgomery over Q_level

    pending_rescale marks a multiplied ciphertext whose rescale has been deferred.
    """

    b: Polynomial
    a: Polynomial
    scale: Fraction
    level: int
    pending_rescale: bool = False

    def __post_init__(self):
        _check_pair((self.b, self.a))
        self.scale = Fraction(self.scale)

    @property
    def basis(self):
        return self.b.basis

    def copy(self):
        return Ciphertext(self.b.copy(), self.a.copy(), self.scale, self.level,
                          self.pending_rescale)

    def to_bytes(self):
        return _pack(CIPHERTEXT_MAGIC, self.level, int(self.pending_rescale), self.scale,
                     [self.b, self.a])

    @classmethod
    def from_bytes(cls, data, context):
        level, flag, scale, (b, a) = _unpack(data, CIPHERTEXT_MAGIC, context, 2)
        return cls(b, a, scale, level, bool(flag))

    def __repr__(self):
        return (f"Ciphertext(level={self.level}, log2(scale)={log2_scale(self.scale):.3f}, "
                f"pending_rescale={self.pending_rescale})")


@dataclass
class TensoredCiphertext:
    """(d0, d1, d2) decrypting under (1, s, s^2); relinearization is deferred"""

    d0: Polynomial
    d1: Polynomial
    d2: Polynomial
    scale: Fraction
    level: int

    def __post_init__(self):
        _check_pair((self.d0, self.d1, self.d2))
        self.scale = Fraction(self.scale)

    @property
    def basis(self):
        return self.d0.basis

    def to_bytes(self):
        return _pack(TENSOR_MAGIC, self.level, 0, self.scale, [self.d0, self.d1, self.d2])

    @classmethod
    def from_bytes(cls, data, context):
        level, _, scale, (d0, d1, d2) = _unpack(data, TENSOR_MAGIC, context, 3)
        return cls(d0, d1, d2, scale, level)


def log2_scale(scale):
    scale = Fraction(scale)
    return math.log2(scale.numerator) - math.log2(scale.denominator)
