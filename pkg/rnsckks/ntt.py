"""
Negacyclic NTT
==============
Two-pass radix-2 transforms over every limb of a polynomial.

The forward transform is a decimation-in-frequency Cooley-Tukey network that
consumes natural-order coefficients and leaves evaluations in bit-reversed order;
the inverse is the matching decimation-in-time Gentleman-Sande network. A
length-N transform is split into a column pass over an n1 x n2 view (the first
log n1 stages) and a row pass (the remaining log n2 stages). Each pass works on
staging copies: column batches of b_k1 columns, or blocks of rows, and groups
its stages into phases of log g stages with an exchange copy at each phase
boundary.

Montgomery transitions are merged into the twiddles: the first forward stage
uses W * R^2 (and scales U by R^2) so the output is in Montgomery form, and the
last inverse stage multiplies by plain N^-1 constants so the output leaves it.
"""

import logging
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .config import get_config
from .errors import DomainMismatchError, ParameterError
from .instrument import counters
from .modarith import correct, fold, mont_mul
from .parallel import parallel_map, worker_count
from .poly import Domain, Polynomial

logger = logging.getLogger(__name__)


def _is_pow2(x):
    return x >= 1 and not x & (x - 1)


def _log2(x):
    return x.bit_length() - 1


def bit_reverse(i, bits):
    out = 0
    for _ in range(bits):
        out = (out << 1) | (i & 1)
        i >>= 1
    return out


@lru_cache(maxsize=None)
def brev_indices(n):
    """Bit-reversal permutation of range(n) as an int64 array"""
    bits = _log2(n)
    idx = np.arange(n, dtype=np.int64)
    out = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        out = (out << 1) | (idx & 1)
        idx >>= 1
    out.setflags(write=False)
    return out


def primitive_root(q, n):
    """Smallest-generator primitive 2N-th root of unity mod q"""
    exponent = (q - 1) // (2 * n)
    for g in range(2, q):
        psi = pow(g, exponent, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise ParameterError(f"No primitive {2 * n}-th root of unity mod {q}")


@dataclass(frozen=True)
class NttParams:
    """Two-pass decomposition parameters"""

    n1: int
    n2: int
    g1: int
    g2: int
    b_k1: int
    ot_enabled: bool = False
    lsb_size: int = 64

    def validate(self, n):
        for name in ('n1', 'n2', 'g1', 'g2', 'b_k1', 'lsb_size'):
            if not _is_pow2(getattr(self, name)):
                raise ParameterError(f"{name}={getattr(self, name)} must be a power of two")
        if self.n1 * self.n2 != n:
            raise ParameterError(f"Invalid factorization: {self.n1} x {self.n2} != N={n}")
        if self.n1 < 2 or self.n2 < 2:
            raise ParameterError("Both passes need at least two points")
        if not 2 <= self.g1 <= self.n1 or not 2 <= self.g2 <= self.n2:
            raise ParameterError(f"Granularity (g1={self.g1}, g2={self.g2}) must divide its pass")
        if self.b_k1 > self.n2:
            raise ParameterError(f"Column batch {self.b_k1} exceeds n2={self.n2}")
        if self.lsb_size > n:
            raise ParameterError(f"lsb_size {self.lsb_size} exceeds N={n}")

    @classmethod
    def default(cls, n):
        """Configured defaults when they factor N, otherwise a balanced split"""
        cfg = get_config()['ntt']
        params = cls(cfg['n1'], cfg['n2'], cfg['g1'], cfg['g2'], cfg['b_k1'],
                     bool(cfg['ot_enabled']), cfg['lsb_size'])
        if params.n1 * params.n2 == n:
            return replace(params, lsb_size=min(params.lsb_size, n))
        n1 = 1 << max(1, _log2(n) // 2)
        n2 = n // n1
        return cls(n1, n2, min(params.g1, n1), min(params.g2, n2), min(params.b_k1, n2),
                   params.ot_enabled, min(params.lsb_size, n))


@lru_cache(maxsize=8)
def _twiddle_tables(basis):
    """Per-prime twiddle tables in Montgomery form, bit-reverse ordered"""
    n = basis.n
    brev = brev_indices(n)
    q = np.asarray(basis.moduli, dtype=np.int64).reshape(-1, 1)
    psi = [primitive_root(c.q, n) for c in basis.contexts]
    psi_inv = [pow(p, -1, c.q) for p, c in zip(psi, basis.contexts)]

    def powers(roots):
        pw = np.ones((len(roots), 1), dtype=np.int64)
        base = np.asarray(roots, dtype=np.int64).reshape(-1, 1)
        while pw.shape[1] < n:
            step = np.asarray([pow(int(b), pw.shape[1], int(qq))
                               for b, qq in zip(base[:, 0], q[:, 0])], dtype=np.int64)
            step = step.reshape(-1, 1)
            pw = np.concatenate([pw, pw * step % q], axis=1)
        return pw

    r_mod = np.asarray([c.r_mod for c in basis.contexts], dtype=np.int64).reshape(-1, 1)
    fwd_plain = powers(psi)
    inv_plain = powers(psi_inv)
    fwd_mont = fwd_plain * r_mod % q
    inv_mont = inv_plain * r_mod % q
    fwd = fwd_mont[:, brev].copy()
    inv = inv_mont[:, brev].copy()
    # entry merge: first stage carries W * R^2 (a Montgomery value of W * R)
    fwd[:, 1] = fwd_mont[:, n // 2] * r_mod[:, 0] % q[:, 0]
    n_inv = np.asarray([c.n_inv_r for c in basis.contexts], dtype=np.int64)
    exit_u = n_inv
    exit_v = inv_plain[:, n // 2] * n_inv % q[:, 0]
    for table in (fwd, inv, fwd_mont, inv_mont, exit_u, exit_v):
        table.setflags(write=False)
    logger.debug(f"Twiddle tables built for {len(basis)} primes at N={n}")
    return fwd, inv, fwd_mont, inv_mont, exit_u, exit_v


def _phases(stages, g):
    lg = _log2(g)
    return [stages[i:i + lg] for i in range(0, len(stages), lg)]


def _ct_butterfly(u, v, w, k):
    """Cooley-Tukey step on views u, v in place; results in (-q, q)"""
    v_w = mont_mul(v, w, k)
    a = fold(u + v_w, k.q)
    b = fold(u - v_w, k.q)
    u[...] = a
    v[...] = b


def _ct_entry(u, v, w, k):
    # u may not be overwritten before both outputs are known
    u_m = mont_mul(u, k.r2, k)
    v_w = mont_mul(v, w, k)
    u[...] = fold(u_m + v_w, k.q)
    v[...] = fold(u_m - v_w, k.q)


def _gs_butterfly(u, v, w, k):
    """Gentleman-Sande step on views u, v in place"""
    a = fold(u + v, k.q)
    b = mont_mul(u - v, w, k)
    u[...] = a
    v[...] = b


def _gs_exit(u, v, exit_u, exit_v, k):
    a = correct(mont_mul(u + v, exit_u, k), k.q)
    b = correct(mont_mul(u - v, exit_v, k), k.q)
    u[...] = a
    v[...] = b


class NttPlan:
    """Precomputed tables and pass geometry for one basis and parameter set"""

    def __init__(self, basis, params):
        params.validate(basis.n)
        self.basis = basis
        self.params = params
        self.n = basis.n
        self.log_n = _log2(self.n)
        self.log_n1 = _log2(params.n1)
        (self.fwd, self.inv, fwd_mont, inv_mont,
         self.exit_u, self.exit_v) = _twiddle_tables(basis)
        self.brev = brev_indices(self.n)
        ls = params.lsb_size
        # W^k = lsb[k % ls] * msb[k // ls], both Montgomery form
        self.lsb_fwd = fwd_mont[:, :ls]
        self.msb_fwd = fwd_mont[:, ::ls]
        self.lsb_inv = inv_mont[:, :ls]
        self.msb_inv = inv_mont[:, ::ls]
        self.rows_per_chunk = max(1, params.n1 // max(1, 2 * worker_count()))

    @property
    def n1(self):
        return self.params.n1

    @property
    def n2(self):
        return self.params.n2

    @property
    def ot_enabled(self):
        return self.params.ot_enabled

    def supports(self, basis):
        return basis.n == self.n and self.basis.contains(basis)

    def rows_for(self, basis):
        """Table row selector (slice when contiguous) and constants for basis"""
        if not self.supports(basis):
            raise DomainMismatchError("Polynomial basis is not covered by this NTT plan")
        idx = self.basis.indices_of(basis)
        if len(idx) and np.array_equal(idx, np.arange(idx[0], idx[0] + len(idx))):
            sel = slice(int(idx[0]), int(idx[0]) + len(idx))
        else:
            sel = idx
        return sel, self.basis.limb_constants.rows(sel)

    # -- on-the-fly twiddles -------------------------------------------------

    def stage_range(self, s, r0=0, r1=None):
        """Table index range of stage s restricted to rows [r0, r1) of the row pass"""
        m = 1 << s
        if s < self.log_n1:
            return m, 2 * m
        r1 = self.n1 if r1 is None else r1
        mb = m // self.n1
        return m + r0 * mb, m + r1 * mb

    def lsb_msb_twiddles(self, sel, k, lo, hi, inverse=False):
        """Twiddles for table indices [lo, hi) rebuilt from LSB/MSB components"""
        ls = self.params.lsb_size
        exps = self.brev[lo:hi]
        lsb = (self.lsb_inv if inverse else self.lsb_fwd)[sel]
        msb = (self.msb_inv if inverse else self.msb_fwd)[sel]
        return correct(mont_mul(lsb[:, exps % ls], msb[:, exps // ls], k), k.q)

    def phase_twiddles(self, sel, k, stages, r0=0, r1=None, inverse=False):
        """Twiddles of every stage in a phase: the largest stage from LSB/MSB
        factors, the others by repeated squaring"""
        top = max(stages)
        lo, hi = self.stage_range(top, r0, r1)
        first = self.lsb_msb_twiddles(sel, k, lo, hi, inverse)
        out = {top: first}
        if top == 0 and not inverse:
            out[0] = correct(mont_mul(first, k.r2, k), k.q)
        for s, w in otf_twiddle(out[top], top, min(stages), k, entry_merge=not inverse):
            out[s] = w
        return out

    # -- transforms ----------------------------------------------------------

    def forward(self, data, sel, k):
        """In-place forward transform of an (L, N) int64 array"""
        L = data.shape[0]
        n1, n2, b = self.n1, self.n2, self.params.b_k1
        X = data.reshape(L, n1, n2)
        k2 = k.expand(2)
        k4 = k.expand(4)
        tw = self.fwd[sel]
        ot = self.params.ot_enabled
        col_phases = _phases(list(range(self.log_n1)), self.params.g1)
        row_phases = _phases(list(range(self.log_n1, self.log_n)), self.params.g2)
        col_tw = {}
        if ot:
            for phase in col_phases:
                col_tw.update(self.phase_twiddles(sel, k2, phase))

        def column_batch(c0):
            buf = X[:, :, c0:c0 + b].copy()
            for p, phase in enumerate(col_phases):
                if p:
                    buf = buf.copy()
                for s in phase:
                    m = 1 << s
                    view = buf.reshape(L, m, 2, n1 // (2 * m), b)
                    w = (col_tw[s] if ot else tw[:, m:2 * m]).reshape(L, m, 1, 1)
                    if s == 0:
                        _ct_entry(view[:, :, 0], view[:, :, 1], w, k4)
                    else:
                        _ct_butterfly(view[:, :, 0], view[:, :, 1], w, k4)
            X[:, :, c0:c0 + b] = buf

        parallel_map(column_batch, range(0, n2, b))

        def row_block(r0):
            r1 = min(n1, r0 + self.rows_per_chunk)
            rows = r1 - r0
            buf = X[:, r0:r1, :].copy()
            for p, phase in enumerate(row_phases):
                if p:
                    buf = buf.copy()
                gen = self.phase_twiddles(sel, k2, phase, r0, r1) if ot else None
                for s in phase:
                    mb = (1 << s) // n1
                    lo, hi = self.stage_range(s, r0, r1)
                    view = buf.reshape(L, rows, mb, 2, n2 // (2 * mb))
                    w = (gen[s] if ot else tw[:, lo:hi]).reshape(L, rows, mb, 1)
                    _ct_butterfly(view[:, :, :, 0], view[:, :, :, 1], w, k4)
            X[:, r0:r1, :] = buf

        parallel_map(row_block, range(0, n1, self.rows_per_chunk))

    def inverse(self, data, sel, k, exit_u, exit_v):
        """In-place inverse transform of an (L, N) int64 array; output canonical"""
        L = data.shape[0]
        n1, n2, b = self.n1, self.n2, self.params.b_k1
        X = data.reshape(L, n1, n2)
        k2 = k.expand(2)
        k4 = k.expand(4)
        tw = self.inv[sel]
        ot = self.params.ot_enabled
        row_phases = _phases(list(range(self.log_n - 1, self.log_n1 - 1, -1)), self.params.g2)
        col_phases = _phases(list(range(self.log_n1 - 1, -1, -1)), self.params.g1)
        eu = exit_u.reshape(L, 1, 1, 1)
        ev = exit_v.reshape(L, 1, 1, 1)

        def row_block(r0):
            r1 = min(n1, r0 + self.rows_per_chunk)
            rows = r1 - r0
            buf = X[:, r0:r1, :].copy()
            for p, phase in enumerate(row_phases):
                if p:
                    buf = buf.copy()
                gen = self.phase_twiddles(sel, k2, phase, r0, r1, inverse=True) if ot else None
                for s in phase:
                    mb = (1 << s) // n1
                    lo, hi = self.stage_range(s, r0, r1)
                    view = buf.reshape(L, rows, mb, 2, n2 // (2 * mb))
                    w = (gen[s] if ot else tw[:, lo:hi]).reshape(L, rows, mb, 1)
                    _gs_butterfly(view[:, :, :, 0], view[:, :, :, 1], w, k4)
            X[:, r0:r1, :] = buf

        parallel_map(row_block, range(0, n1, self.rows_per_chunk))

        col_tw = {}
        if ot:
            for phase in col_phases:
                inner = [s for s in phase if s > 0]
                if inner:
                    col_tw.update(self.phase_twiddles(sel, k2, inner, inverse=True))

        def column_batch(c0):
            buf = X[:, :, c0:c0 + b].copy()
            for p, phase in enumerate(col_phases):
                if p:
                    buf = buf.copy()
                for s in phase:
                    m = 1 << s
                    view = buf.reshape(L, m, 2, n1 // (2 * m), b)
                    if s == 0:
                        _gs_exit(view[:, :, 0], view[:, :, 1], eu, ev, k4)
                        continue
                    w = (col_tw[s] if ot else tw[:, m:2 * m]).reshape(L, m, 1, 1)
                    _gs_butterfly(view[:, :, 0], view[:, :, 1], w, k4)
            X[:, :, c0:c0 + b] = buf

        parallel_map(column_batch, range(0, n2, b))

    def exit_constants(self, sel, k, exit_scale=None):
        """Plain last-stage constants N^-1 * s and W^-brev(1) * N^-1 * s per row"""
        eu = np.asarray(self.exit_u[sel], dtype=np.int64).reshape(-1, 1)
        ev = np.asarray(self.exit_v[sel], dtype=np.int64).reshape(-1, 1)
        if exit_scale is None:
            return eu, ev
        q = k.q
        scale = np.asarray([int(s) for s in exit_scale], dtype=np.int64).reshape(-1, 1) % q
        return eu * scale % q, ev * scale % q

    def __repr__(self):
        p = self.params
        return (f"NttPlan(N={self.n}, n1={p.n1}, n2={p.n2}, g1={p.g1}, g2={p.g2}, "
                f"b_k1={p.b_k1}, ot={p.ot_enabled}, lsb={p.lsb_size})")


def otf_twiddle(last, last_stage, first_stage, k, entry_merge=True):
    """Twiddles of the stages preceding a phase's last stage

    last holds the canonical Montgomery twiddles of `last_stage` for a contiguous,
    even-aligned index range. Entry j of stage s equals the square of entry 2j of
    stage s + 1; stage 0 additionally carries the R^2 entry merge. Yields
    (stage, twiddles) from last_stage - 1 down to first_stage.
    """
    w = last
    for s in range(last_stage - 1, first_stage - 1, -1):
        half = w[:, 0::2]
        w = correct(mont_mul(half, half, k), k.q)
        if s == 0 and entry_merge:
            yield s, correct(mont_mul(w, k.r2, k), k.q)
        else:
            yield s, w


def build_plan(basis, n1=None, n2=None, g1=None, g2=None, b_k1=None, ot_enabled=None,
               lsb_size=None):
    """NttPlan for basis; unspecified parameters come from the configured defaults"""
    default = NttParams.default(basis.n)
    params = NttParams(
        n1=default.n1 if n1 is None else n1,
        n2=default.n2 if n2 is None else n2,
        g1=default.g1 if g1 is None else g1,
        g2=default.g2 if g2 is None else g2,
        b_k1=default.b_k1 if b_k1 is None else b_k1,
        ot_enabled=default.ot_enabled if ot_enabled is None else bool(ot_enabled),
        lsb_size=default.lsb_size if lsb_size is None else lsb_size,
    )
    plan = NttPlan(basis, params)
    logger.debug(f"Built {plan} for {len(basis)} primes")
    return plan


def ntt_forward(p, plan, pool=None):
    """Coefficient domain -> bit-reversed evaluation domain, Montgomery form"""
    if p.domain != Domain.COEFFICIENT:
        raise DomainMismatchError("ntt_forward expects a coefficient-domain polynomial")
    if p.mont:
        raise DomainMismatchError("ntt_forward expects plain-form input (entry merge adds R)")
    sel, k = plan.rows_for(p.basis)
    data = p.wide()
    if len(p.basis):
        plan.forward(data, sel, k)
    counters.add('ntt')
    return Polynomial.from_wide(data, p.basis, Domain.EVALUATION, mont=True, pool=pool)


def intt_inverse(p, plan, exit_scale=None, pool=None):
    """Evaluation domain (Montgomery) -> coefficient domain, plain canonical

    exit_scale optionally multiplies row i by exit_scale[i] inside the last stage.
    """
    if p.domain != Domain.EVALUATION:
        raise DomainMismatchError("intt_inverse expects an evaluation-domain polynomial")
    if not p.mont:
        raise DomainMismatchError("intt_inverse expects Montgomery-form input")
    sel, k = plan.rows_for(p.basis)
    data = p.wide()
    if len(p.basis):
        eu, ev = plan.exit_constants(sel, k, exit_scale)
        plan.inverse(data, sel, k, eu, ev)
    counters.add('intt')
    return Polynomial.from_wide(data, p.basis, Domain.COEFFICIENT, mont=False, canonical=True,
                                pool=pool)
