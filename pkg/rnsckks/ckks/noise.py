"""
Noise Estimates
===============
High-probability bounds on the slot-wise error of fresh and rescaled values,
expressed in message units (already divided by the scale).

Slot values are evaluations of the error polynomial at roots of unity, so a
polynomial with independent coefficients of standard deviation sd has slot
values of standard deviation sd * sqrt(N); bounds use TAIL standard deviations.
"""

import math
from fractions import Fraction

TAIL = 6.0


def encoding_error_bound(n, scale):
    """Worst case of coefficient rounding: N/2 coefficients of at most 1/2 each"""
    return (n / 2) / float(Fraction(scale))


def fresh_noise_bound(n, sigma, h, scale=1, public=False):
    """Bound on |decrypt(encrypt(m)) - m| in any slot

    Secret-key encryption adds one Gaussian polynomial. Public-key encryption adds
    v*e + e0 + e1*s with v ternary of density 1/2.
    """
    bound = TAIL * sigma * math.sqrt(n)
    if public:
        bound += TAIL * sigma * math.sqrt(n) * TAIL * math.sqrt(n / 2)
        bound += TAIL * sigma * math.sqrt(n) * TAIL * math.sqrt(h)
    return bound / float(Fraction(scale))


def rescale_error_bound(n, h, scale, terms=1):
    """Rounding error of dividing b + a*s by a group product

    Each of b and a*s picks up a rounding term of at most `terms` per coefficient;
    a*s scales it by the secret's slot size (at most TAIL * sqrt(h)).
    """
    per_coefficient = terms * (1 + TAIL * math.sqrt(h))
    return TAIL * per_coefficient * math.sqrt(n) / float(Fraction(scale))


def precision_bits(error):
    """-log2 of an absolute error (infinite for zero)"""
    return math.inf if error == 0 else -math.log2(error)
