"""
Configuration loading.
"""

import json
import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

CONFIG_ENV = "BEACON_GUARD_CONFIG"
DEFAULT_CONFIG = Path(__file__).resolve().parents[2] / "config" / "default_config.json"


def load_config(config_path: Optional[str] = None) -> dict:
    """
    Load configuration from JSON file.

    The path is taken from the argument, then from BEACON_GUARD_CONFIG (a local .env
    file is honoured), then falls back to config/default_config.json.
    """
    load_dotenv()
    path = Path(config_path or os.getenv(CONFIG_ENV) or DEFAULT_CONFIG)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            config = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in config file: {e}")
    logger.debug(f"Config loaded from {path}")
    return config


def section(config: dict, name: str) -> dict:
    """Config section or an empty dict."""
    value = config.get(name, {})
    return value if isinstance(value, dict) else {}
