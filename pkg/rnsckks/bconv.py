"""
Fast Base Conversion
====================
Approximate RNS base conversion from a source basis P to a target basis Q:

    a_hat[i] = sum_j [a_j * (P/P_j)^-1]_{P_j} * (P/P_j) mod Q_i

Part 1 (the per-source-prime constant multiply) is fused into the INTT exit
constants when called through ``mod_switch``. Part 2 is a tiled matrix product
accumulated in signed 64-bit with a single signed Montgomery reduction at the
end; the table constants carry the R factor that reduction removes.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import get_config
from .errors import BasisMismatchError, DomainMismatchError, ParameterError
from .instrument import counters
from .modarith import HALF_R, R, correct, mont_mul, mont_reduce
from .ntt import intt_inverse, ntt_forward
from .parallel import parallel_map
from .poly import Domain, Polynomial

logger = logging.getLogger(__name__)

VECTOR_WIDTHS = (1, 2, 4)


def _centered(x, q):
    return x - q if x > (q - 1) // 2 else x


@dataclass(frozen=True)
class BConvTiling:
    """Output tiling of part 2: (l_t x n_t) per worker, (l_b x n_b) workers per group"""

    l_t: int = 3
    n_t: int = 4
    l_b: int = 1
    n_b: int = 256
    v: int = 1

    @classmethod
    def default_for(cls, n):
        """Configured tiling, with n_b shrunk to fit small rings"""
        cfg = get_config()['bconv_tiling']
        tiling = cls(cfg['l_t'], cfg['n_t'], cfg['l_b'], cfg['n_b'], cfg['v'])
        if tiling.n_t * tiling.n_b > n:
            n_t = min(tiling.n_t, n)
            tiling = cls(tiling.l_t, n_t, tiling.l_b, max(1, n // n_t), min(tiling.v, n_t))
        return tiling

    @property
    def group_rows(self):
        return self.l_t * self.l_b

    @property
    def group_cols(self):
        return self.n_t * self.n_b

    def validate(self, limbs, n):
        if min(self.l_t, self.n_t, self.l_b, self.n_b) < 1:
            raise ParameterError(f"Tiling {self} has a non-positive extent")
        if self.v not in VECTOR_WIDTHS or self.n_t % self.v:
            raise ParameterError(f"Vector width {self.v} must be 1, 2 or 4 and divide "
                                 f"n_t={self.n_t}")
        if self.group_cols > n or n % self.group_cols:
            raise ParameterError(f"Tiling {self} invalid for (L={limbs}, N={n}): "
                                 f"group width {self.group_cols} must divide N")

    def grid(self, limbs, n):
        """(l_g, n_g) so that l_t*l_b*l_g >= L and n_t*n_b*n_g >= N"""
        return math.ceil(limbs / self.group_rows) if limbs else 0, n // self.group_cols


@dataclass(frozen=True, eq=False)
class BConvTable:
    """Centered conversion constants from source to target

    c[i][j] is (P/P_j) * R mod Q_i and c_plain[i][j] is (P/P_j) mod Q_i, both centered
    in [-(Q_i-1)/2, (Q_i-1)/2]. reduce_every is the number of terms accumulated
    between reductions: alpha when the static bound holds, fewer otherwise.
    """

    source: object
    target: object
    inv_p_hat: tuple
    c: np.ndarray = field(repr=False)
    c_plain: np.ndarray = field(repr=False)
    reduce_every: int

    @classmethod
    def build(cls, source, target):
        if source.n != target.n:
            raise BasisMismatchError("Source and target bases use different ring degrees")
        if set(source.moduli) & set(target.moduli):
            raise BasisMismatchError("Source and target bases must be disjoint")
        alpha = len(source)
        big_p = math.prod(source.moduli)
        p_hat = [big_p // p for p in source.moduli]
        inv_p_hat = tuple(pow(h % p, -1, p) for h, p in zip(p_hat, source.moduli))
        c_plain = np.asarray([[_centered(h % q, q) for h in p_hat] for q in target.moduli],
                             dtype=np.int64).reshape(len(target), alpha)
        c_mont = np.asarray([[_centered(h % q * R % q, q) for h in p_hat] for q in target.moduli],
                            dtype=np.int64).reshape(len(target), alpha)

        p_max = max(source.moduli) if alpha else 1
        # |sum| < k * (p_max - 1) * (q - 1)/2 + q must stay below q * 2^31
        if alpha * p_max < R:
            reduce_every = max(1, alpha)
        else:
            reduce_every = max(1, (R - 2) // p_max)
            logger.info(f"BConv from {alpha} primes needs mid-accumulation reductions "
                        f"every {reduce_every} terms (p_max={p_max})")
        if target.moduli:
            worst = reduce_every * (p_max - 1) * ((max(target.moduli) - 1) // 2)
            if worst + max(target.moduli) >= max(target.moduli) * HALF_R or worst >= 1 << 62:
                raise ParameterError("BConv accumulator bound cannot be met for this basis pair")
        for table in (c_plain, c_mont):
            table.setflags(write=False)
        return cls(source, target, inv_p_hat, c_mont, c_plain, reduce_every)

    @property
    def alpha(self):
        return len(self.source)

    @property
    def mid_reductions(self):
        return max(0, (self.alpha - 1) // self.reduce_every)


def bconv_part1(t, table, pool=None):
    """Row j times inv_p_hat[j] mod P_j; canonical coefficient-domain output"""
    if t.basis != table.source:
        raise BasisMismatchError("bconv_part1 input is not over the table's source basis")
    if t.domain != Domain.COEFFICIENT or t.mont:
        raise DomainMismatchError("bconv_part1 expects a plain coefficient-domain polynomial")
    consts = t.basis.limb_constants
    scale = np.asarray([c * R % p for c, p in zip(table.inv_p_hat, t.basis.moduli)],
                       dtype=np.int64).reshape(-1, 1)
    values = correct(mont_mul(t.wide(), scale, consts), consts.q)
    return Polynomial.from_wide(values, t.basis, Domain.COEFFICIENT, False, canonical=True,
                                pool=pool)


def bconv_part2(t, table, tiling=None, pool=None):
    """Tiled product of the scaled source rows with the centered constant matrix

    Output rows are plain-form residues in (-q_i, q_i) over the table's target basis.
    """
    if t.basis != table.source:
        raise BasisMismatchError("bconv_part2 input is not over the table's source basis")
    target = table.target
    limbs, n = len(target), t.basis.n
    tiling = tiling or BConvTiling.default_for(n)
    tiling.validate(limbs, n)
    out = Polynomial._allocate(target, Domain.COEFFICIENT, False, pool)
    counters.add('bconv')
    if not limbs:
        return out

    src = t.limbs
    alpha = table.alpha
    consts = target.limb_constants
    rows, cols, v = tiling.group_rows, tiling.group_cols, tiling.v
    l_g, n_g = tiling.grid(limbs, n)
    every = table.reduce_every

    def group(gid):
        gi, gj = divmod(gid, n_g)
        r0, r1 = gi * rows, min(limbs, (gi + 1) * rows)
        c0, c1 = gj * cols, (gj + 1) * cols
        c_tile = table.c[r0:r1]
        if tiling.l_b == 1:
            block = src[:, c0:c1]
        else:
            # group staging buffer shared by the l_b workers of this group
            block = src[:, c0:c1].copy()
        a = block.astype(np.int64).reshape(alpha, cols // v, v)
        k = consts.rows(slice(r0, r1)).expand(3)
        acc = np.zeros((r1 - r0, cols // v, v), dtype=np.int64)
        for j in range(alpha):
            if j and j % every == 0:
                acc = mont_mul(mont_reduce(acc, k), k.r2, k)
            acc += c_tile[:, j].reshape(-1, 1, 1) * a[j]
        out.limbs[r0:r1, c0:c1] = mont_reduce(acc, k).reshape(r1 - r0, cols)

    parallel_map(group, range(l_g * n_g))
    return out


def mod_switch(a, target, plan, table, tiling=None, pool=None):
    """INTT (with part 1 fused into its exit) -> part 2 -> NTT (entry merged)"""
    if a.domain != Domain.EVALUATION or not a.mont:
        raise DomainMismatchError("mod_switch expects a Montgomery-form evaluation polynomial")
    if table is None or table.source != a.basis or table.target != target:
        raise BasisMismatchError("No conversion table for this basis pair")
    if not plan.supports(a.basis) or not plan.supports(target):
        raise BasisMismatchError("NTT plan does not cover the source and target bases")
    scaled = intt_inverse(a, plan, exit_scale=table.inv_p_hat)
    converted = bconv_part2(scaled, table, tiling)
    out = ntt_forward(converted, plan, pool)
    counters.add('modswitch')
    return out
