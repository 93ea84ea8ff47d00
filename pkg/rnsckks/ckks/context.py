"""
CKKS Context
============
Shared, read-only state for one parameter set: the RNS basis, the NTT plan,
the BConv tiling, the buffer pool and the per-basis-pair conversion tables.
"""

import logging
import math
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..bconv import BConvTable, BConvTiling
from ..config import get_config
from ..errors import LevelError, ParameterError
from ..ntt import build_plan, ntt_forward
from ..poly import BufferPool, Domain, Polynomial
from ..rns import generate_basis

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CkksParameters:
    """Scheme parameters; None fields fall back to the configuration"""

    n: int
    l: int
    alpha: int
    delta_bits: int
    hamming_weight: int = None
    sigma: float = None

    def resolved(self):
        cfg = get_config()
        h = self.hamming_weight if self.hamming_weight is not None else cfg['hamming_weight']
        if h > self.n:
            logger.warning(f"Hamming weight {h} exceeds N={self.n}; using N/2")
            h = self.n // 2
        sigma = self.sigma if self.sigma is not None else cfg['sigma']
        return CkksParameters(self.n, self.l, self.alpha, self.delta_bits, h, float(sigma))

    @property
    def dnum(self):
        """Number of gadget digits D = ceil(L / alpha)"""
        return math.ceil(self.l / self.alpha)


class CkksContext:
    """Basis, plan, tiling and caches shared by encoder, keys and evaluator

    Safe to share across threads: everything but the table and view caches is
    immutable, and those caches are lock-protected.
    """

    def __init__(self, params, basis, plan, tiling=None, pool=None, seed=None):
        self.params = params.resolved()
        self.basis = basis
        self.plan = plan
        self.tiling = tiling or BConvTiling.default_for(basis.n)
        self.tiling.validate(len(basis), basis.n)
        self.pool = pool
        self.rng = np.random.default_rng(seed)
        self._tables = {}
        self._views = {}
        self.lock = threading.RLock()

    @classmethod
    def create(cls, n, l, alpha, delta_bits, hamming_weight=None, sigma=None, seed=None,
               ntt_params=None, tiling=None, use_pool=False):
        """Generate the basis and plan for (N, L, alpha, delta)"""
        params = CkksParameters(n, l, alpha, delta_bits, hamming_weight, sigma)
        basis = generate_basis(n, l, alpha, delta_bits)
        plan = build_plan(basis, **(ntt_params or {}))
        pool = BufferPool(n) if use_pool else None
        context = cls(params, basis, plan, tiling, pool, seed)
        logger.info(f"CKKS context ready: N={n} L={l} alpha={alpha} D={context.params.dnum} "
                    f"delta=2^{delta_bits}")
        return context

    @property
    def n(self):
        return self.basis.n

    @property
    def slots(self):
        return self.basis.n // 2

    @property
    def max_level(self):
        return self.basis.l

    @property
    def alpha(self):
        return self.basis.alpha

    @property
    def delta(self):
        return 1 << self.params.delta_bits

    # -- bases ---------------------------------------------------------------

    def _cached_view(self, key, build):
        with self.lock:
            view = self._views.get(key)
            if view is None:
                view = self._views[key] = build()
            return view

    def check_level(self, level):
        if level < 2 or level > self.max_level or level % 2:
            raise LevelError(f"Level {level} must be an even value in [2, {self.max_level}]")

    def level_basis(self, level):
        """Q prefix of length level"""
        return self._cached_view(('q', level), lambda: self.basis.q_view(level))

    def extended_basis(self, level):
        """Q prefix of length level followed by every P prime"""
        return self._cached_view(('qp', level), lambda: self.basis.extended_view(level))

    @cached_property
    def p_basis(self):
        return self.basis.p_view()

    @cached_property
    def p_product(self):
        return self.p_basis.product()

    def digit_bases(self, level):
        """Gadget digits at level: runs of alpha consecutive Q primes, the last may be short"""
        def build():
            moduli = self.level_basis(level).moduli
            return tuple(self.basis.sub_basis(moduli[i:i + self.alpha])
                         for i in range(0, len(moduli), self.alpha))
        return self._cached_view(('digits', level), build)

    def modup_targets(self, level):
        """Per digit, the extended basis of level without that digit's primes"""
        def build():
            ext = self.extended_basis(level)
            return tuple(ext.without(digit) for digit in self.digit_bases(level))
        return self._cached_view(('modup', level), build)

    def group_basis(self, level):
        """The two Q primes dropped by a rescale from level"""
        def build():
            moduli = self.level_basis(level).moduli
            return self.basis.sub_basis(moduli[-2:])
        return self._cached_view(('group', level), build)

    def merged_source(self, level):
        """Every P prime plus the last group of level (merged ModDown + rescale)"""
        def build():
            return self.basis.sub_basis(self.p_basis.moduli + self.group_basis(level).moduli)
        return self._cached_view(('merged', level), build)

    # -- tables --------------------------------------------------------------

    def table(self, source, target):
        """Cached BConv table for a (source, target) pair"""
        key = (source.moduli, target.moduli)
        with self.lock:
            table = self._tables.get(key)
        if table is None:
            table = BConvTable.build(source, target)
            with self.lock:
                table = self._tables.setdefault(key, table)
            logger.debug(f"BConv table {len(source)} -> {len(target)} primes cached")
        return table

    # -- helpers -------------------------------------------------------------

    def from_integers(self, coefficients, basis):
        """Evaluation-domain Montgomery polynomial from int64 coefficients"""
        coefficients = np.asarray(coefficients, dtype=np.int64)
        if coefficients.shape != (basis.n,):
            raise ParameterError(f"Expected {basis.n} coefficients, got {coefficients.shape}")
        rows = np.remainder(coefficients[None, :], basis.limb_constants.q)
        poly = Polynomial.from_wide(rows, basis, Domain.COEFFICIENT, False, canonical=True)
        return ntt_forward(poly, self.plan, self.pool)

    def from_residues(self, rows, basis):
        """Evaluation-domain Montgomery polynomial from canonical coefficient residues"""
        poly = Polynomial.from_wide(rows, basis, Domain.COEFFICIENT, False, canonical=True)
        return ntt_forward(poly, self.plan, self.pool)

    def __repr__(self):
        p = self.params
        return f"CkksContext(N={p.n}, L={p.l}, alpha={p.alpha}, delta=2^{p.delta_bits})"
