"""
Library Configuration
=====================
JSON-backed settings merged over built-in defaults.
"""

import copy
import json
import logging
import threading
from pathlib import Path

logger = logging.getLogger(__name__)

CONFIG_FILE = 'ckks_config.json'

DEFAULT_CONFIG = {
    'debug_checks': False,
    'threads': 0,
    'ntt': {
        'n1': 128,
        'n2': 512,
        'g1': 16,
        'g2': 8,
        'b_k1': 16,
        'ot_enabled': False,
        'lsb_size': 64,
    },
    'bconv_tiling': {
        'l_t': 3,
        'n_t': 4,
        'l_b': 1,
        'n_b': 256,
        'v': 1,
    },
    'sigma': 3.2,
    'hamming_weight': 64,
    'scale_tolerance_bits': 40,
    'pool_classes': [2, 4, 8, 16, 28, 32, 54, 68, 72, 128],
    'group_slack_step_bits': 0.25,
    'group_slack_max_bits': 2.0,
    'log_level': 'INFO',
}

_lock = threading.Lock()
_config = None


def _merge(defaults, loaded):
    """Merge loaded values over defaults, one level deep for nested dicts"""
    merged = copy.deepcopy(defaults)
    for key, value in loaded.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


def load_config(config_file=CONFIG_FILE):
    """Load configuration from JSON file"""
    path = Path(config_file)
    if not path.exists():
        logger.debug(f"No config file at {path}, using defaults")
        return copy.deepcopy(DEFAULT_CONFIG)

    try:
        with open(path, 'r') as f:
            loaded = json.load(f)
        config = _merge(DEFAULT_CONFIG, loaded)
        logger.info(f"Configuration loaded from {path}")
        return config
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Failed to load config {path}: {e}; using defaults")
        return copy.deepcopy(DEFAULT_CONFIG)


def get_config():
    """Process-wide configuration, loaded on first use"""
    global _config
    with _lock:
        if _config is None:
            _config = load_config()
        return _config


def update_config(**overrides):
    """Override settings at runtime (nested dicts are merged)"""
    global _config
    current = get_config()
    with _lock:
        _config = _merge(current, overrides)
        return _config


def reset_config():
    global _config
    with _lock:
        _config = copy.deepcopy(DEFAULT_CONFIG)


def debug_checks_enabled():
    return bool(get_config()['debug_checks'])
