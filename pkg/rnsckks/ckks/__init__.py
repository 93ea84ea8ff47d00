"""
CKKS mechanism layer: encoding, keys, encryption and homomorphic evaluation.
"""

from .ciphertext import Ciphertext, Plaintext, TensoredCiphertext, log2_scale
from .context import CkksContext, CkksParameters
from .encoder import Encoder
from .encryptor import decrypt, encrypt
from .evaluator import Evaluator, HoistState
from .keys import (KIND_CONJUGATION, KIND_RELIN, KIND_ROTATION, EvaluationKey, KeySet, PublicKey,
                   SecretKey, evk_gen, generate_keyset, keygen, keygen_public, rotation_keys)
from .noise import encoding_error_bound, fresh_noise_bound, precision_bits, rescale_error_bound

__all__ = [
    'Ciphertext', 'Plaintext', 'TensoredCiphertext', 'log2_scale',
    'CkksContext', 'CkksParameters', 'Encoder', 'encrypt', 'decrypt',
    'Evaluator', 'HoistState',
    'KIND_CONJUGATION', 'KIND_RELIN', 'KIND_ROTATION', 'EvaluationKey', 'KeySet', 'PublicKey',
    'SecretKey', 'evk_gen', 'generate_keyset', 'keygen', 'keygen_public', 'rotation_keys',
    'encoding_error_bound', 'fresh_noise_bound', 'precision_bits', 'rescale_error_bound',
]
