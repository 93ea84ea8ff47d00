"""
Error Types
===========
Exception hierarchy shared by every layer of the library.
"""


class CkksError(Exception):
    """Base class for all library errors"""


class ParameterError(CkksError, ValueError):
    """Invalid parameters (ring degree, plan factorization, tiling, ...)"""


class PrimeExhaustionError(ParameterError):
    """Not enough NTT-friendly primes in the admissible window"""


class BasisMismatchError(CkksError, ValueError):
    """Operands live over different RNS bases or the basis does not fit a table/plan"""


class DomainMismatchError(CkksError, ValueError):
    """Coefficient/evaluation domain or Montgomery-form flags do not match"""


class ScaleMismatchError(CkksError, ValueError):
    """Ciphertext scales differ beyond the configured tolerance"""


class LevelError(CkksError, ValueError):
    """Level exhausted or exceeding the basis"""


class MissingKeyError(CkksError, KeyError):
    """A required evaluation key is not present"""


class KeyKindError(CkksError, ValueError):
    """Evaluation key of the wrong kind for the requested operation"""


class PoolError(CkksError, RuntimeError):
    """Buffer pool misuse (double release, foreign buffer)"""


class SerializationError(CkksError, ValueError):
    """Malformed or incompatible serialized data"""


class ContractViolation(CkksError, AssertionError):
    """Debug-mode range check failed (lazy accumulator overflow, bad input range)"""


class OutputMismatchError(CkksError, AssertionError):
    """A swept configuration produced output that differs from the default configuration"""
