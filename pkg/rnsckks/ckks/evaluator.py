"""
CKKS Evaluator
==============
Homomorphic mechanisms over evaluation-domain Montgomery ciphertexts.

Key switching is ModUp (one ModSwitch per gadget digit) -> KeyMult (multiply-
accumulate against the key digits) -> ModDown ((x - BConv(x_P)) * P^-1). HMult
merges ModDown with the following rescale into one ModSwitch from P plus the
dropped group unless lazy rescaling is on. Rotations apply the automorphism after
KeyMult, so one ModUp can serve any number of rotations (hoisting), and rotate-
accumulate sums KeyMult outputs before a single ModDown.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..automorphism import CONJUGATE, apply_automorphism, automorphism_map
from ..bconv import mod_switch
from ..config import get_config
from ..errors import LevelError, MissingKeyError, ParameterError, ScaleMismatchError
from ..instrument import counters
from ..ntt import intt_inverse
from ..poly import (concat_limbs, ew_add, ew_mac, ew_mul, ew_mul_const, ew_neg, ew_sub, fuse,
                    mul_const_stage, sub_stage)
from ..rns import crt_decompose, crt_reconstruct
from .ciphertext import Ciphertext, TensoredCiphertext
from .encoder import Encoder
from .keys import KIND_CONJUGATION, KIND_RELIN, KIND_ROTATION, KeySet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HoistState:
    """ModUp-extended digits of one polynomial, reusable at the level they were built for"""

    level: int
    digits: tuple


class Evaluator:
    """Mechanisms for one context and key set

    merge_moddown fuses ModDown with rescaling inside HMult. lazy_rescale defers
    rescaling after multiplications until the next multiplication (or an explicit
    rescale) and therefore forces the unmerged path. min_ks composes missing rotations
    from the available rotation keys.
    """

    def __init__(self, context, keys=None, merge_moddown=True, lazy_rescale=False,
                 min_ks=False):
        self.context = context
        self.keys = keys or KeySet()
        self.merge_moddown = merge_moddown
        self.lazy_rescale = lazy_rescale
        self.min_ks = min_ks
        self.encoder = Encoder(context)
        if lazy_rescale and merge_moddown:
            logger.info("Lazy rescaling enabled: HMult uses the unmerged ModDown path")

    @property
    def merged(self):
        return self.merge_moddown and not self.lazy_rescale

    @property
    def pool(self):
        return self.context.pool

    # -- bookkeeping ---------------------------------------------------------

    def check_scales(self, s1, s2):
        tolerance = Fraction(1, 1 << int(get_config()['scale_tolerance_bits']))
        if abs(Fraction(s1) - Fraction(s2)) > Fraction(s1) * tolerance:
            bits = get_config()['scale_tolerance_bits']
            raise ScaleMismatchError(f"Scales differ beyond 2^-{bits} relative: "
                                     f"{float(s1):.6g} vs {float(s2):.6g}")

    @staticmethod
    def _same_level(x, y):
        if x.level != y.level:
            raise LevelError(f"Operands at levels {x.level} and {y.level}; use level_down first")

    def _plaintext_at(self, pt, basis):
        if not pt.poly.basis.contains(basis):
            raise LevelError(f"Plaintext at level {pt.level} cannot serve {len(basis)} primes")
        return pt.poly if pt.poly.basis == basis else pt.poly.restrict(basis)

    def _flush(self, ct):
        return self.rescale(ct) if ct.pending_rescale else ct

    # -- additive ------------------------------------------------------------

    def hadd(self, x, y):
        """x + y; the result carries x's scale"""
        self._same_level(x, y)
        self.check_scales(x.scale, y.scale)
        if isinstance(x, TensoredCiphertext) or isinstance(y, TensoredCiphertext):
            if not (isinstance(x, TensoredCiphertext) and isinstance(y, TensoredCiphertext)):
                raise ParameterError("Relinearize before adding a tensored and a plain ciphertext")
            return TensoredCiphertext(ew_add(x.d0, y.d0, self.pool), ew_add(x.d1, y.d1, self.pool),
                                      ew_add(x.d2, y.d2, self.pool), x.scale, x.level)
        return Ciphertext(ew_add(x.b, y.b, self.pool), ew_add(x.a, y.a, self.pool), x.scale,
                          x.level, x.pending_rescale or y.pending_rescale)

    def hsub(self, x, y):
        self._same_level(x, y)
        self.check_scales(x.scale, y.scale)
        return Ciphertext(ew_sub(x.b, y.b, self.pool), ew_sub(x.a, y.a, self.pool), x.scale,
                          x.level, x.pending_rescale or y.pending_rescale)

    def hneg(self, ct):
        return Ciphertext(ew_neg(ct.b, self.pool), ew_neg(ct.a, self.pool), ct.scale, ct.level,
                          ct.pending_rescale)

    def padd(self, ct, pt):
        self.check_scales(ct.scale, pt.scale)
        m = self._plaintext_at(pt, ct.basis)
        return Ciphertext(ew_add(ct.b, m, self.pool), ct.a.copy(self.pool), ct.scale, ct.level,
                          ct.pending_rescale)

    # -- multiplicative ------------------------------------------------------

    def pmult(self, ct, pt):
        """Slot-wise product with a plaintext; scales multiply and a rescale is pending"""
        ct = self._flush(ct)
        m = self._plaintext_at(pt, ct.basis)
        return Ciphertext(ew_mul(ct.b, m, self.pool), ew_mul(ct.a, m, self.pool),
                          ct.scale * pt.scale, ct.level, pending_rescale=True)

    def tensor(self, x, y):
        """(b1 b2, b1 a2 + a1 b2, a1 a2) decrypting under (1, s, s^2)"""
        x, y = self._flush(x), self._flush(y)
        self._same_level(x, y)
        d0 = ew_mul(x.b, y.b, self.pool)
        d1 = ew_mac([(x.b, y.a), (x.a, y.b)], self.pool)
        d2 = ew_mul(x.a, y.a, self.pool)
        counters.add('tensor')
        return TensoredCiphertext(d0, d1, d2, x.scale * y.scale, x.level)

    def relinearize(self, t, rescale=None):
        """Key-switch d2 from s^2 to s

        With rescale (the default unless lazy rescaling is on) the result is one level
        lower; the merged path folds ModDown and rescale into a single ModSwitch.
        """
        rlk = self.keys.relinearization_key()
        rlk.expect(KIND_RELIN)
        level = t.level
        rescale = (not self.lazy_rescale) if rescale is None else rescale
        if rescale and level < 4:
            raise LevelError(f"No double-prime group left to drop at level {level}")

        state = self.mod_up(t.d2, level)
        kb, ka = self.key_mult(state, rlk)
        if rescale and self.merged:
            b = self._add_lifted(kb, t.d0, level)
            a = self._add_lifted(ka, t.d1, level)
            b, a = self._mod_down_rescale_pair((b, a), level)
            scale = t.scale / self.context.basis.group_product(level)
            return Ciphertext(b, a, scale, level - 2)

        b2, a2 = self._mod_down_pair((kb, ka), level)
        ct = Ciphertext(ew_add(t.d0, b2, self.pool), ew_add(t.d1, a2, self.pool), t.scale, level,
                        pending_rescale=True)
        return self.rescale(ct) if rescale else ct

    def hmult(self, x, y):
        return self.relinearize(self.tensor(x, y))

    # -- levels --------------------------------------------------------------

    def rescale(self, ct):
        """Exact division by the last double-prime group, rounding to nearest

        Lifts (x + floor(q_a q_b / 2)) mod q_a q_b exactly from the two dropped rows in the
        coefficient domain, subtracts it less the half offset and multiplies by (q_a q_b)^-1.
        """
        level = ct.level
        if level < 4:
            raise LevelError(f"No double-prime group left to drop at level {level}")
        context = self.context
        keep = context.level_basis(level - 2)
        group = context.group_basis(level)
        q_a, q_b = group.moduli
        product = q_a * q_b
        half = product // 2
        inv_a = pow(q_a, -1, q_b)
        inverse = [pow(product % q, -1, q) for q in keep.moduli]

        parts = []
        for p in (ct.b, ct.a):
            r_a, r_b = intt_inverse(p.restrict(group), context.plan).wide()
            r_a = (r_a + half) % q_a
            r_b = (r_b + half) % q_b
            t = np.remainder(r_b - r_a, q_b) * inv_a % q_b
            # (x + half) mod q_a q_b, less half: x minus this is a multiple of q_a q_b
            offset = r_a + q_a * t - half
            lifted = context.from_residues(np.remainder(offset[None, :], keep.limb_constants.q),
                                           keep)
            pipeline = fuse([sub_stage(lifted), mul_const_stage(inverse)])
            parts.append(pipeline(p.restrict(keep), self.pool))
        counters.add('rescale')
        return Ciphertext(parts[0], parts[1], ct.scale / product, level - 2)

    def level_down(self, ct, level):
        """Drop trailing groups without dividing the message"""
        self.context.check_level(level)
        if level > ct.level:
            raise LevelError(f"Cannot raise a ciphertext from level {ct.level} to {level}")
        if level == ct.level:
            return ct.copy()
        basis = self.context.level_basis(level)
        return Ciphertext(ct.b.restrict(basis, self.pool), ct.a.restrict(basis, self.pool),
                          ct.scale, level, ct.pending_rescale)

    # -- key switching -------------------------------------------------------

    def mod_up(self, d, level=None):
        """Extend every gadget digit of d to the full extended basis"""
        context = self.context
        level = d.basis.l if level is None else level
        ext = context.extended_basis(level)
        digits = []
        for digit, target in zip(context.digit_bases(level), context.modup_targets(level)):
            src = d.restrict(digit)
            converted = mod_switch(src, target, context.plan, context.table(digit, target),
                                   context.tiling)
            digits.append(concat_limbs([src, converted], ext, self.pool))
        counters.add('modup')
        return HoistState(level, tuple(digits))

    def key_mult(self, state, evk):
        """Sum over digits of ModUp(d)_k * evk_k, for both key components"""
        keys = evk.at_level(self.context, state.level)
        if len(keys) != len(state.digits):
            raise ParameterError(f"Key has {len(keys)} digits at level {state.level}, "
                                 f"input has {len(state.digits)}")
        b = ew_mac([(x, kb) for x, (kb, _) in zip(state.digits, keys)], self.pool)
        a = ew_mac([(x, ka) for x, (_, ka) in zip(state.digits, keys)], self.pool)
        counters.add('keymult', len(keys))
        return b, a

    def mod_down(self, x, level):
        """(x_Q - BConv(x_P)) * P^-1 over Q_level"""
        context = self.context
        q_basis = context.level_basis(level)
        p_basis = context.p_basis
        converted = mod_switch(x.restrict(p_basis), q_basis, context.plan,
                               context.table(p_basis, q_basis), context.tiling)
        inverse = [pow(context.p_product % q, -1, q) for q in q_basis.moduli]
        return fuse([sub_stage(converted), mul_const_stage(inverse)])(x.restrict(q_basis),
                                                                       self.pool)

    def _mod_down_pair(self, pair, level):
        out = tuple(self.mod_down(x, level) for x in pair)
        counters.add('moddown')
        return out

    def _mod_down_rescale(self, x, level):
        context = self.context
        keep = context.level_basis(level - 2)
        source = context.merged_source(level)
        converted = mod_switch(x.restrict(source), keep, context.plan,
                               context.table(source, keep), context.tiling)
        big = source.product()
        inverse = [pow(big % q, -1, q) for q in keep.moduli]
        return fuse([sub_stage(converted), mul_const_stage(inverse)])(x.restrict(keep), self.pool)

    def _mod_down_rescale_pair(self, pair, level):
        out = tuple(self._mod_down_rescale(x, level) for x in pair)
        counters.add('moddown')
        counters.add('rescale')
        return out

    def _add_lifted(self, x, d, level):
        """x + P * d over the extended basis (P * d vanishes modulo every P prime)"""
        context = self.context
        q_basis = context.level_basis(level)
        scaled = ew_mul_const(d, [context.p_product % q for q in q_basis.moduli], self.pool)
        q_part = ew_add(x.restrict(q_basis), scaled, self.pool)
        return concat_limbs([q_part, x.restrict(context.p_basis)], context.extended_basis(level),
                            self.pool)

    def key_switch(self, d, evk, level=None):
        """(b', a') with b' + a' * s_under ~ d * s_from over Q_level"""
        level = d.basis.l if level is None else level
        if level > d.basis.l:
            raise LevelError(f"Input has only {d.basis.l} primes, level {level} requested")
        if d.basis.l != level:
            d = d.restrict(self.context.level_basis(level))
        state = self.mod_up(d, level)
        return self._mod_down_pair(self.key_mult(state, evk), level)

    # -- rotations -----------------------------------------------------------

    def _rotation_key(self, step):
        if self.keys.has_rotation(step, self.context.slots):
            return self.keys.rotation_key(step, self.context.slots)
        if self.min_ks:
            return None
        raise MissingKeyError(f"No rotation key for step {step}")

    def min_ks_steps(self, r):
        """Greedy decomposition of r into available rotation steps"""
        slots = self.context.slots
        remaining = r % slots
        available = sorted(self.keys.rotations, reverse=True)
        steps = []
        while remaining:
            step = next((s for s in available if s <= remaining), None)
            if step is None:
                raise MissingKeyError(f"Rotation {r} cannot be composed from steps {available}")
            steps.append(step)
            remaining -= step
        return steps

    def _apply_switched(self, ct, state, amap, evk):
        if state.level != ct.level:
            raise LevelError(f"Hoisted digits built for level {state.level}, ciphertext at "
                             f"{ct.level}")
        kb, ka = self.key_mult(state, evk)
        b2, a2 = self._mod_down_pair((kb, ka), ct.level)
        b = ew_add(apply_automorphism(ct.b, amap, self.pool), apply_automorphism(b2, amap),
                   self.pool)
        a = apply_automorphism(a2, amap, self.pool)
        return Ciphertext(b, a, ct.scale, ct.level, ct.pending_rescale)

    def hrot(self, ct, r):
        """Rotate slots left by r"""
        step = r % self.context.slots
        if step == 0:
            return ct.copy()
        evk = self._rotation_key(step)
        if evk is None:
            for part in self.min_ks_steps(step):
                ct = self.hrot(ct, part)
            return ct
        evk.expect(KIND_ROTATION, step)
        state = self.mod_up(ct.a, ct.level)
        return self._apply_switched(ct, state, automorphism_map(step, self.context.n), evk)

    def hconj(self, ct):
        """Complex conjugate of every slot"""
        evk = self.keys.conjugation_key()
        evk.expect(KIND_CONJUGATION)
        state = self.mod_up(ct.a, ct.level)
        return self._apply_switched(ct, state, automorphism_map(CONJUGATE, self.context.n), evk)

    def hoisted_rotations(self, ct, rotations):
        """Rotations of one ciphertext sharing a single ModUp"""
        rotations = list(rotations)
        slots = self.context.slots
        state = None
        out = []
        for r in rotations:
            step = r % slots
            if step == 0:
                out.append(ct.copy())
                continue
            evk = self._rotation_key(step)
            if evk is None:
                out.append(self.hrot(ct, step))
                continue
            evk.expect(KIND_ROTATION, step)
            if state is None:
                state = self.mod_up(ct.a, ct.level)
            out.append(self._apply_switched(ct, state, automorphism_map(step, self.context.n), evk))
        return out

    def _extended_plaintext(self, pt, level):
        """Plaintext residues over Q_level and every P prime"""
        ext = self.context.extended_basis(level)
        if pt.poly.basis.contains(ext):
            return self._plaintext_at(pt, ext)
        coefficients = intt_inverse(pt.poly, self.context.plan)
        values = crt_reconstruct(coefficients.wide(), coefficients.basis, centered=True)
        return self.context.from_residues(crt_decompose(values, ext), ext)

    def hoisted_rotate_accumulate(self, cts, terms):
        """sum_k pt_k * HRot(ct_k, r_k) with one ModUp per ciphertext and one ModDown

        cts is one ciphertext (shared by every term) or a list aligned with terms;
        terms is a sequence of (r, plaintext).
        """
        terms = list(terms)
        if not terms:
            raise ParameterError("Nothing to accumulate")
        if isinstance(cts, Ciphertext):
            cts = [cts] * len(terms)
        if len(cts) != len(terms):
            raise ParameterError(f"{len(cts)} ciphertexts for {len(terms)} terms")
        flushed = {}
        for ct in cts:
            if id(ct) not in flushed:
                flushed[id(ct)] = self._flush(ct)
        cts = [flushed[id(ct)] for ct in cts]
        level = cts[0].level
        for ct in cts:
            if ct.level != level:
                raise LevelError("Every accumulated ciphertext must share one level")
            self.check_scales(cts[0].scale, ct.scale)
        for _, pt in terms:
            self.check_scales(terms[0][1].scale, pt.scale)

        context = self.context
        q_basis = context.level_basis(level)
        slots = context.slots
        states = {}
        q_b, q_a, ext_b, ext_a = [], [], [], []
        for ct, (r, pt) in zip(cts, terms):
            step = r % slots
            if step == 0:
                m = self._plaintext_at(pt, q_basis)
                q_b.append((m, ct.b))
                q_a.append((m, ct.a))
                continue
            evk = self._rotation_key(step)
            if evk is None:
                raise MissingKeyError(f"Hoisted accumulation needs a key for step {step}")
            evk.expect(KIND_ROTATION, step)
            if id(ct) not in states:
                states[id(ct)] = self.mod_up(ct.a, level)
            kb, ka = self.key_mult(states[id(ct)], evk)
            amap = automorphism_map(step, context.n)
            m_ext = self._extended_plaintext(pt, level)
            ext_b.append((m_ext, apply_automorphism(kb, amap)))
            ext_a.append((m_ext, apply_automorphism(ka, amap)))
            q_b.append((m_ext.restrict(q_basis), apply_automorphism(ct.b, amap)))

        b = ew_mac(q_b, self.pool)
        a = ew_mac(q_a, self.pool) if q_a else None
        if ext_b:
            down_b, down_a = self._mod_down_pair((ew_mac(ext_b), ew_mac(ext_a)), level)
            b = ew_add(b, down_b, self.pool)
            a = down_a if a is None else ew_add(a, down_a, self.pool)
        return Ciphertext(b, a, cts[0].scale * terms[0][1].scale, level, pending_rescale=True)

    def linear_transform(self, ct, matrix, baby_steps=None):
        """Matrix-vector product over the slots by baby-step giant-step diagonals

        y = sum_j rot(sum_i rot(diag_{n1 j + i}, -n1 j) * rot(u, i), n1 j), with the baby
        rotations hoisted and one rescale at the end.
        """
        slots = self.context.slots
        matrix = np.asarray(matrix, dtype=np.complex128)
        if matrix.shape != (slots, slots):
            raise ParameterError(f"Matrix must be {slots} x {slots}, got {matrix.shape}")
        n1 = baby_steps or 1 << math.ceil(math.log2(math.sqrt(slots)))
        n2 = -(-slots // n1)
        ct = self._flush(ct)
        rows = np.arange(slots)
        babies = self.hoisted_rotations(ct, range(n1))

        result = None
        for j in range(n2):
            inner = None
            for i in range(n1):
                d = n1 * j + i
                if d >= slots:
                    break
                diagonal = matrix[rows, (rows + d) % slots]
                if not np.any(diagonal):
                    continue
                pt = self.encoder.encode(np.roll(diagonal, n1 * j), level=ct.level)
                term = self.pmult(babies[i], pt)
                inner = term if inner is None else self.hadd(inner, term)
            if inner is None:
                continue
            if j:
                inner = self.hrot(inner, n1 * j)
            result = inner if result is None else self.hadd(result, inner)
        if result is None:
            result = self.pmult(ct, self.encoder.encode(np.zeros(slots), level=ct.level))
        return self.rescale(result)
