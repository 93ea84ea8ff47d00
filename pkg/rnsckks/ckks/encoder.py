"""
CKKS Encoding
=============
Complex slot vectors <-> scaled integer polynomials through the canonical
embedding. Slot k sits at the root zeta^(5^k) and its conjugate at zeta^(-5^k),
so a Galois automorphism with element 5^R rotates slots left by R.
"""

import logging
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ..errors import LevelError, ParameterError
from ..ntt import intt_inverse
from ..rns import crt_decompose, crt_reconstruct
from .ciphertext import Plaintext, log2_scale

logger = logging.getLogger(__name__)

# Headroom kept above log2(scale) when choosing decode primes
_DECODE_MARGIN_BITS = 64
_INT64_SAFE = 1 << 62


@lru_cache(maxsize=16)
def slot_positions(n):
    """Natural-order evaluation index (5^k mod 2N - 1) / 2 of every slot k"""
    powers = np.empty(n // 2, dtype=np.int64)
    x = 1
    for k in range(n // 2):
        powers[k] = (x - 1) // 2
        x = x * 5 % (2 * n)
    powers.setflags(write=False)
    return powers


@lru_cache(maxsize=16)
def _twist(n):
    return np.exp(1j * np.pi * np.arange(n) / n)


def embed_inverse(values, n):
    """Real coefficients whose canonical embedding carries values in its slots"""
    values = np.asarray(values, dtype=np.complex128)
    if values.ndim != 1 or len(values) > n // 2:
        raise ParameterError(f"At most {n // 2} slot values fit ring degree {n}")
    slots = np.zeros(n // 2, dtype=np.complex128)
    slots[:len(values)] = values
    pos = slot_positions(n)
    spread = np.zeros(n, dtype=np.complex128)
    spread[pos] = slots
    spread[n - 1 - pos] = np.conj(slots)
    return np.real(np.fft.fft(spread) / _twist(n)) / n


def embed(coefficients, n):
    """Slot values of a real coefficient vector"""
    evaluations = n * np.fft.ifft(np.asarray(coefficients, dtype=np.float64) * _twist(n))
    return evaluations[slot_positions(n)]


class Encoder:
    """Encode and decode against one context"""

    def __init__(self, context):
        self.context = context

    def encode(self, values, level=None, scale=None, extended=False):
        """Plaintext at level (full by default) scaled by scale (delta by default)

        With extended=True the plaintext also carries residues modulo every P prime, as
        needed by hoisted rotate-accumulate.
        """
        context = self.context
        level = context.max_level if level is None else level
        context.check_level(level)
        scale = Fraction(context.delta if scale is None else scale)
        if scale <= 0:
            raise ParameterError("Scale must be positive")
        basis = context.extended_basis(level) if extended else context.level_basis(level)
        coefficients = np.rint(embed_inverse(values, context.n) * float(scale))

        peak = float(np.max(np.abs(coefficients))) if len(coefficients) else 0.0
        budget = math.log2(context.level_basis(level).product()) - 1
        if peak and math.log2(peak) >= budget:
            raise LevelError(f"Scaled message (2^{math.log2(peak):.1f}) does not fit "
                             f"level {level} (2^{budget:.1f})")
        if peak < _INT64_SAFE:
            rows = np.remainder(coefficients.astype(np.int64)[None, :], basis.limb_constants.q)
        else:
            rows = crt_decompose([int(c) for c in coefficients], basis)
        poly = context.from_residues(rows, basis)
        return Plaintext(poly, scale, level)

    def encode_constant(self, value, level=None, scale=None, extended=False):
        return self.encode(np.full(self.context.slots, value, dtype=np.complex128),
                           level, scale, extended)

    def coefficients(self, plaintext):
        """Centred integer coefficients (Python ints) of a plaintext"""
        context = self.context
        poly = intt_inverse(plaintext.poly, context.plan)
        need = log2_scale(plaintext.scale) + _DECODE_MARGIN_BITS
        moduli = poly.basis.moduli
        rows, bits = 0, 0.0
        while rows < len(moduli) and bits < need:
            bits += math.log2(moduli[rows])
            rows += 1
        prefix = poly.basis.sub_basis(moduli[:rows])
        return crt_reconstruct(poly.restrict(prefix).wide(), prefix, centered=True)

    def decode(self, plaintext):
        """Complex slot vector of length N/2"""
        values = self.coefficients(plaintext)
        floats = np.asarray([float(v) for v in values], dtype=np.float64)
        return embed(floats / float(plaintext.scale), self.context.n)
