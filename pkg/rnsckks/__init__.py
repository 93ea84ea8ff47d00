"""
rnsckks - 32-bit RNS-CKKS core
==============================
Signed Montgomery arithmetic, RNS bases, two-pass NTT, tiled base conversion,
Galois automorphisms and the CKKS mechanism layer, plus sweep benchmarks.
"""

__version__ = '0.3.0'

from .automorphism import apply_automorphism, automorphism_map, galois_element, map_index
from .bconv import BConvTable, BConvTiling, bconv_part1, bconv_part2, mod_switch
from .config import get_config, load_config, reset_config, update_config
from .errors import (BasisMismatchError, CkksError, ContractViolation, DomainMismatchError,
                     KeyKindError, LevelError, MissingKeyError, ParameterError, PoolError,
                     PrimeExhaustionError, ScaleMismatchError, SerializationError)
from .instrument import counters
from .modarith import (PrimeContext, correct, from_mont, lazy_add, mont_mul, mont_reduce,
                       reference_reduce, to_mont)
from .ntt import NttParams, NttPlan, build_plan, intt_inverse, ntt_forward
from .poly import BufferPool, Domain, Polynomial, fuse
from .rns import RnsBasis, crt_reconstruct, generate_basis
