"""
Configuration loading
- Reads configs/config.yaml
- Fills in defaults for every section the library reads
"""

import copy
import logging
from pathlib import Path
from typing import Optional

import yaml

DEFAULT_CONFIG_PATH = "configs/config.yaml"

DEFAULTS = {
    'sampling': {
        'samples': 100000,
        'seed': 0,
        'chunk_size': 4096,
        'workers': 1,
        'probe_samples': 4096,
    },
    'verdict': {
        'zcrit': 4.0,
        'tolerance': 1e-9,
    },
    'limits': {
        'chain_max_dim': 16,
        'quantified_max_dim': 8,
    },
    'selftest': {
        'reduction_cases': 100,
        'reduction_max_dim': 8,
        'moment_cases': 100,
        'moment_max_dim': 6,
        'tilt_scale': 0.3,
        'moment_pass_threshold': 95,
    },
    'output': {
        'format': 'json',
    },
    'logging': {
        'level': 'INFO',
        'format': '[%(asctime)s] %(levelname)s %(name)s: %(message)s',
        'datefmt': '%H:%M:%S',
    },
}


def load_config(config_path: Optional[str] = DEFAULT_CONFIG_PATH) -> dict:
    """
    Load the YAML config and merge it over the built-in defaults
    Args:
        config_path: path to the YAML file; a missing file yields the defaults
    Returns:
        config dict with every section present
    """
    config = copy.deepcopy(DEFAULTS)
    if config_path is None:
        return config
    path = Path(config_path)
    if not path.exists():
        return config
    with open(path, 'r', encoding='utf-8') as f:
        loaded = yaml.safe_load(f) or {}
    for section, values in loaded.items():
        if isinstance(values, dict) and isinstance(config.get(section), dict):
            config[section].update(values)
        else:
            config[section] = values
    return config


def setup_logging(config: dict) -> None:
    """Configure the root logger from the 'logging' section (stderr only)"""
    log_config = config.get('logging', {})
    level = getattr(logging, str(log_config.get('level', 'INFO')).upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format=log_config.get('format', DEFAULTS['logging']['format']),
        datefmt=log_config.get('datefmt', DEFAULTS['logging']['datefmt']),
    )
