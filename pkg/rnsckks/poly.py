"""
RNS Polynomials
===============
L x N residue matrices, a limb-class buffer pool, element-wise operations and
fusable element-wise pipelines.

Storage is one contiguous int32 block per polynomial, row i reduced modulo the
i-th prime of its basis. Arithmetic widens chunks to int64, applies the stage
kernels and narrows back on store.
"""

import logging
import struct
import threading
import weakref
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import debug_checks_enabled, get_config
from .errors import (BasisMismatchError, DomainMismatchError, ParameterError, PoolError,
                     SerializationError)
from .modarith import HALF_R, check_range, correct, fold, mont_mul, mont_reduce
from .parallel import parallel_map, worker_count

logger = logging.getLogger(__name__)

POLY_MAGIC = b'RPLY'
POLY_VERSION = 1
_HEADER = struct.Struct('<4sHIHBB32s')

# Columns per fused chunk; one chunk per worker at least
_MIN_CHUNK = 1024


class Domain(str, Enum):
    COEFFICIENT = 'coefficient'
    EVALUATION = 'evaluation'


class BufferPool:
    """Free lists of (class, N) int32 blocks keyed by limb-count class

    Pooled polynomials hand their block back when released or garbage collected, so a
    repeated workload settles at a fixed footprint.
    """

    def __init__(self, n, classes=None):
        self.n = n
        self.classes = sorted(set(classes or get_config()['pool_classes']))
        # reentrant: a collected polynomial may return its block while the lock is held
        self.lock = threading.RLock()
        self._free = {c: [] for c in self.classes}
        self._outstanding = {}
        self._counts = {'acquires': 0, 'releases': 0, 'allocations': 0, 'fallbacks': 0}
        self._footprint = 0

    def limb_class(self, limbs):
        """Smallest class holding `limbs` rows, or None when every class is too small"""
        for c in self.classes:
            if c >= limbs:
                return c
        return None

    def acquire(self, limbs):
        """Buffer with at least `limbs` rows; falls back to a direct allocation"""
        cls = self.limb_class(limbs)
        with self.lock:
            self._counts['acquires'] += 1
            if cls is None:
                self._counts['fallbacks'] += 1
                buffer = np.empty((limbs, self.n), dtype=np.int32)
                logger.debug(f"Pool fallback allocation for {limbs} limbs")
            elif self._free[cls]:
                buffer = self._free[cls].pop()
            else:
                self._counts['allocations'] += 1
                self._footprint += cls * self.n * 4
                buffer = np.empty((cls, self.n), dtype=np.int32)
            self._outstanding[id(buffer)] = (cls, buffer)
        return buffer

    def release(self, buffer):
        """Return a buffer to its class (fallback buffers are dropped)"""
        with self.lock:
            entry = self._outstanding.pop(id(buffer), None)
            if entry is None or entry[1] is not buffer:
                raise PoolError("Buffer released twice or not owned by this pool")
            self._counts['releases'] += 1
            cls = entry[0]
            if cls is not None:
                self._free[cls].append(buffer)

    @property
    def stats(self):
        with self.lock:
            stats = dict(self._counts)
            stats['live'] = len(self._outstanding)
            stats['pooled'] = sum(len(v) for v in self._free.values())
            stats['footprint_bytes'] = self._footprint
            return stats


class Polynomial:
    """L x N residue matrix with domain and Montgomery-form flags

    Evaluation-domain columns are in bit-reversed order. A polynomial with no basis
    and no rows is the empty accumulator seed.
    """

    __slots__ = ('limbs', 'basis', 'domain', 'mont', 'canonical', '_pool', '_buffer',
                 '_finalizer', '__weakref__')

    def __init__(self, limbs, basis, domain=Domain.COEFFICIENT, mont=False, canonical=False,
                 pool=None, buffer=None):
        self.limbs = limbs
        self.basis = basis
        self.domain = Domain(domain)
        self.mont = bool(mont)
        self.canonical = bool(canonical)
        self._pool = pool
        self._buffer = buffer
        self._finalizer = None
        if pool is not None and buffer is not None:
            self._finalizer = weakref.finalize(self, pool.release, buffer)
            self._finalizer.atexit = False
        if basis is not None:
            if limbs.shape != (len(basis), basis.n):
                raise BasisMismatchError(
                    f"Limb matrix {limbs.shape} does not match basis ({len(basis)}, {basis.n})")

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 0), dtype=np.int32), None)

    @property
    def is_empty(self):
        return self.basis is None

    @classmethod
    def zeros(cls, basis, domain=Domain.COEFFICIENT, mont=False, pool=None):
        poly = cls._allocate(basis, domain, mont, pool)
        poly.limbs.fill(0)
        poly.canonical = True
        return poly

    @classmethod
    def _allocate(cls, basis, domain, mont, pool):
        if pool is None:
            return cls(np.empty((len(basis), basis.n), dtype=np.int32), basis, domain, mont)
        buffer = pool.acquire(len(basis))
        return cls(buffer[:len(basis)], basis, domain, mont, pool=pool, buffer=buffer)

    @classmethod
    def from_wide(cls, values, basis, domain=Domain.COEFFICIENT, mont=False, canonical=False,
                  pool=None):
        """Store int64 residues (already reduced to (-q, q)) as a polynomial"""
        values = np.asarray(values, dtype=np.int64)
        if debug_checks_enabled() and len(basis):
            check_range(values, basis.limb_constants.q, 'polynomial residue')
        poly = cls._allocate(basis, domain, mont, pool)
        np.copyto(poly.limbs, values, casting='unsafe')
        poly.canonical = canonical
        return poly

    @property
    def n(self):
        return self.limbs.shape[1]

    @property
    def num_limbs(self):
        return self.limbs.shape[0]

    def wide(self):
        return self.limbs.astype(np.int64)

    def copy(self, pool=None):
        if self.is_empty:
            return Polynomial.empty()
        out = Polynomial._allocate(self.basis, self.domain, self.mont, pool)
        np.copyto(out.limbs, self.limbs)
        out.canonical = self.canonical
        return out

    def restrict(self, sub_basis, pool=None):
        """Rows belonging to sub_basis, in sub_basis order"""
        idx = self.basis.indices_of(sub_basis)
        out = Polynomial._allocate(sub_basis, self.domain, self.mont, pool)
        np.take(self.limbs, idx, axis=0, out=out.limbs)
        out.canonical = self.canonical
        return out

    def to_canonical(self):
        if self.canonical or self.is_empty:
            return self.copy()
        values = correct(self.wide(), self.basis.limb_constants.q)
        return Polynomial.from_wide(values, self.basis, self.domain, self.mont, canonical=True)

    def same_residues(self, other):
        """Equal modulo every prime (representatives may differ)"""
        if self.basis != other.basis or self.domain != other.domain or self.mont != other.mont:
            return False
        q = self.basis.limb_constants.q
        return bool(np.array_equal(correct(self.wide(), q), correct(other.wide(), q)))

    def release(self):
        """Hand the backing buffer back to its pool"""
        if self._pool is None:
            return
        if self._buffer is None:
            raise PoolError("Polynomial already released")
        self._finalizer()
        self._buffer = None
        self.limbs = None

    def to_bytes(self):
        header = _HEADER.pack(POLY_MAGIC, POLY_VERSION, self.basis.n, len(self.basis),
                              1 if self.domain == Domain.EVALUATION else 0, int(self.mont),
                              bytes.fromhex(self.basis.basis_hash))
        rows = correct(self.wide(), self.basis.limb_constants.q)
        return header + rows.astype('<u4').tobytes()

    @classmethod
    def from_bytes(cls, data, basis):
        if len(data) < _HEADER.size:
            raise SerializationError("Polynomial record too short")
        magic, version, n, limbs, domain, mont, digest = _HEADER.unpack_from(data)
        if magic != POLY_MAGIC or version != POLY_VERSION:
            raise SerializationError(f"Unsupported polynomial record {magic!r} v{version}")
        if digest.hex() != basis.basis_hash or n != basis.n or limbs != len(basis):
            raise SerializationError("Polynomial was serialized over a different basis")
        body = data[_HEADER.size:_HEADER.size + 4 * n * limbs]
        if len(body) != 4 * n * limbs:
            raise SerializationError("Truncated polynomial rows")
        rows = np.frombuffer(body, dtype='<u4').astype(np.int64).reshape(limbs, n)
        if np.any(rows >= basis.limb_constants.q):
            raise SerializationError("Residue not reduced modulo its prime")
        return cls.from_wide(rows, basis, Domain.EVALUATION if domain else Domain.COEFFICIENT,
                             bool(mont), canonical=True)

    @classmethod
    def record_size(cls, basis):
        return _HEADER.size + 4 * basis.n * len(basis)

    def __repr__(self):
        if self.is_empty:
            return 'Polynomial(empty)'
        return (f"Polynomial(L={len(self.basis)}, N={self.basis.n}, {self.domain.value}, "
                f"mont={self.mont})")


def concat_limbs(parts, basis, pool=None):
    """Polynomial over basis whose rows are gathered from parts (disjoint sub-bases)"""
    first = parts[0]
    out = Polynomial._allocate(basis, first.domain, first.mont, pool)
    covered = 0
    for part in parts:
        if part.domain != first.domain or part.mont != first.mont:
            raise DomainMismatchError("concat_limbs parts must share domain and form")
        out.limbs[basis.indices_of(part.basis)] = part.limbs
        covered += len(part.basis)
    if covered != len(basis):
        raise BasisMismatchError(f"Parts cover {covered} of {len(basis)} rows")
    out.canonical = all(p.canonical for p in parts)
    return out


def column_chunks(n):
    """Column slices for chunked element-wise passes"""
    size = max(_MIN_CHUNK, n // max(1, worker_count()))
    return [slice(start, min(n, start + size)) for start in range(0, n, size)]


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    """One element-wise step of a pipeline

    operand is a Polynomial, a per-limb constant sequence or None. Stages that move
    data across columns (automorphisms) set element_aligned=False and cannot be fused.
    """

    op: str
    operand: object = None
    element_aligned: bool = True


def add_stage(p):
    return Stage('add', p)


def sub_stage(p):
    return Stage('sub', p)


def lazy_add_stage(p):
    return Stage('lazy_add', p)


def mul_stage(p):
    return Stage('mul', p)


def mul_const_stage(constants):
    return Stage('mul_const', tuple(int(c) for c in constants))


def add_const_stage(constants):
    return Stage('add_const', tuple(int(c) for c in constants))


def neg_stage():
    return Stage('neg')


def correct_stage():
    return Stage('correct')


_POLY_OPS = ('add', 'sub', 'lazy_add', 'mul')
_CONST_OPS = ('mul_const', 'add_const')


def _check_operand(x, p, op):
    if p.is_empty:
        raise ParameterError(f"Stage '{op}' cannot take the empty polynomial as operand")
    if p.basis != x.basis:
        raise BasisMismatchError(f"Stage '{op}' operand basis differs from the input basis")
    if p.domain != x.domain:
        raise DomainMismatchError(f"Stage '{op}' mixes {x.domain.value} and {p.domain.value}")


def _bind(stages, x):
    """Resolve stages against input x into (kernel, output flags)

    Every kernel takes (v, cols) where v is the int64 chunk and cols the column slice.
    Magnitudes are tracked in units of q: a lazy chain may grow to k*q and must be
    reduced before the pipeline ends; a multiplication needs k*q_max < 2^31.
    """
    consts = x.basis.limb_constants
    q = consts.q
    q_max = int(q.max())
    mont = x.mont
    bound = 1
    canonical = x.canonical
    kernels = []

    for stage in stages:
        op = stage.op
        if op in _POLY_OPS:
            _check_operand(x, stage.operand, op)
            operand = stage.operand.limbs
        if op in ('add', 'sub'):
            if stage.operand.mont != mont:
                raise DomainMismatchError(f"Stage '{op}' mixes Montgomery and plain operands")
            bound += 1
            sign = 1 if op == 'add' else -1
            if bound == 2:
                bound = 1
                kernels.append(lambda v, c, o=operand, s=sign: fold(v + s * o[:, c], q))
            else:
                kernels.append(lambda v, c, o=operand, s=sign: v + s * o[:, c])
        elif op == 'lazy_add':
            if stage.operand.mont != mont:
                raise DomainMismatchError("Stage 'lazy_add' mixes Montgomery and plain operands")
            bound += 1
            kernels.append(lambda v, c, o=operand: v + o[:, c])
        elif op == 'mul':
            if bound * q_max >= HALF_R:
                raise ParameterError(f"Lazy magnitude {bound}q too large before multiplication")
            other = stage.operand.mont
            if mont and other:
                kernels.append(lambda v, c, o=operand: mont_mul(v, o[:, c], consts))
            elif mont or other:
                kernels.append(lambda v, c, o=operand: mont_mul(v, o[:, c], consts))
                mont = False
            else:
                kernels.append(lambda v, c, o=operand: mont_mul(mont_mul(v, o[:, c], consts),
                                                               consts.r2, consts))
            bound = 1
        elif op in _CONST_OPS:
            values = np.asarray(stage.operand, dtype=object)
            if values.shape != (len(x.basis),):
                raise BasisMismatchError(f"Stage '{op}' needs one constant per limb")
            moduli = x.basis.moduli
            if op == 'mul_const':
                if bound * q_max >= HALF_R:
                    raise ParameterError(f"Lazy magnitude {bound}q too large before multiplication")
                # c * R mod q so the reduction keeps the input's form
                col = np.asarray([(int(cv) % qi) * (1 << 32) % qi
                                  for cv, qi in zip(values, moduli)], dtype=np.int64).reshape(-1, 1)
                kernels.append(lambda v, c, k=col: mont_mul(v, k, consts))
                bound = 1
            else:
                scale = (1 << 32) if mont else 1
                col = np.asarray([(int(cv) * scale) % qi for cv, qi in zip(values, moduli)],
                                 dtype=np.int64).reshape(-1, 1)
                bound += 1
                if bound == 2:
                    bound = 1
                    kernels.append(lambda v, c, k=col: fold(v + k, q))
                else:
                    kernels.append(lambda v, c, k=col: v + k)
        elif op == 'neg':
            kernels.append(lambda v, c: -v)
        elif op == 'correct':
            kernels.append(lambda v, c: correct(v, q))
            bound = 1
            canonical = True
            continue
        else:
            raise ParameterError(f"Unknown or non-element-wise stage '{op}'")
        canonical = False

    if bound > 1:
        raise ParameterError("Lazy accumulation must be reduced before the pipeline ends")
    return kernels, mont, canonical


class FusedPipeline:
    """Single-pass executor for a list of element-aligned stages"""

    def __init__(self, stages):
        stages = list(stages)
        for stage in stages:
            if not stage.element_aligned:
                raise ParameterError(f"Stage '{stage.op}' is not element-aligned and cannot "
                                     "be fused")
        self.stages = stages

    def __call__(self, x, pool=None):
        if not self.stages:
            return x.copy(pool)
        kernels, mont, canonical = _bind(self.stages, x)
        out = Polynomial._allocate(x.basis, x.domain, mont, pool)
        src = x.limbs

        def run(cols):
            v = src[:, cols].astype(np.int64)
            for kernel in kernels:
                v = kernel(v, cols)
            out.limbs[:, cols] = v

        parallel_map(run, column_chunks(x.n))
        out.canonical = canonical
        return out

    def run_sequential(self, x):
        """Reference schedule: each stage is one full pass with a materialised result"""
        if not self.stages:
            return x.copy()
        kernels, mont, canonical = _bind(self.stages, x)
        v = x.wide()
        everything = slice(None)
        for kernel in kernels:
            v = np.array(kernel(v, everything), dtype=np.int64)
        return Polynomial.from_wide(v, x.basis, x.domain, mont, canonical)


def fuse(stages):
    """Build a single-pass executor; rejects non-element-aligned stages"""
    return FusedPipeline(stages)


# ---------------------------------------------------------------------------
# Element-wise operations
# ---------------------------------------------------------------------------

def _unary(stage, a, pool=None):
    return FusedPipeline([stage])(a, pool)


def ew_add(a, b, pool=None):
    if a.is_empty:
        return b.copy(pool)
    if b.is_empty:
        return a.copy(pool)
    return _unary(add_stage(b), a, pool)


def ew_sub(a, b, pool=None):
    if b.is_empty:
        return a.copy(pool)
    return _unary(sub_stage(b), a, pool)


def ew_neg(a, pool=None):
    return _unary(neg_stage(), a, pool)


def ew_mul(a, b, pool=None):
    """Limb-wise product; Montgomery x Montgomery stays in Montgomery form"""
    return _unary(mul_stage(b), a, pool)


def ew_mul_const(a, constants, pool=None):
    """Multiply row i by constants[i] mod q_i, preserving the input's form"""
    if np.isscalar(constants) or isinstance(constants, int):
        constants = [constants] * len(a.basis)
    return _unary(mul_const_stage(constants), a, pool)


def ew_add_const(a, constants, pool=None):
    if np.isscalar(constants) or isinstance(constants, int):
        constants = [constants] * len(a.basis)
    return _unary(add_const_stage(constants), a, pool)


def ew_correct(a, pool=None):
    return _unary(correct_stage(), a, pool)


def ew_mac(pairs, pool=None):
    """Sum of limb-wise products with one delayed Montgomery reduction

    Every product is below q^2, so up to floor(2^31 / q_max) of them accumulate before
    a mid-way reduction (reduce, then re-enter with r2) keeps the sum in range.
    """
    pairs = list(pairs)
    if not pairs:
        raise ParameterError("ew_mac needs at least one product")
    first = pairs[0][0]
    basis, domain = first.basis, first.domain
    forms = {(a.mont, b.mont) for a, b in pairs}
    if len(forms) != 1:
        raise DomainMismatchError("ew_mac operands must share one Montgomery-form pattern")
    for a, b in pairs:
        for p in (a, b):
            _check_operand(first, p, 'mac')
    a_mont, b_mont = forms.pop()
    consts = basis.limb_constants
    per_reduction = max(1, (HALF_R - 1) // int(consts.q.max()))
    out = Polynomial._allocate(basis, domain, a_mont and b_mont, pool)

    def run(cols):
        acc = np.zeros((len(basis), cols.stop - cols.start), dtype=np.int64)
        for k, (a, b) in enumerate(pairs):
            if k and k % per_reduction == 0:
                acc = mont_mul(mont_reduce(acc, consts), consts.r2, consts)
            acc += a.limbs[:, cols].astype(np.int64) * b.limbs[:, cols]
        v = mont_reduce(acc, consts)
        if not (a_mont or b_mont):
            v = mont_mul(v, consts.r2, consts)
        out.limbs[:, cols] = v

    parallel_map(run, column_chunks(basis.n))
    return out
