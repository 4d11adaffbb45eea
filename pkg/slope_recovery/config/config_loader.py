#!/usr/bin/env python3
"""
Centralized Configuration Loader with Environment Variable Override Support

This module provides a unified configuration interface that:
1. Loads configuration from JSON files
2. Overrides with environment variables (and .env files)
3. Builds the tolerance block and solver options used by the numerical core
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Dict, Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

load_dotenv()

# env var -> (config block, key, cast)
ENV_OVERRIDES = {
    "SLOPE_EQ_TOL": ("tolerances", "eq_tol", float),
    "SLOPE_RANK_TOL": ("tolerances", "rank_tol", float),
    "SLOPE_PATTERN_TOL": ("tolerances", "pattern_tol", float),
    "SLOPE_MEMBERSHIP_TOL": ("tolerances", "membership_tol", float),
    "SLOPE_MAX_ITER": ("solver", "max_iter", int),
    "SLOPE_REL_TOL": ("solver", "rel_tol", float),
    "SLOPE_WORKERS": ("experiments", "workers", int),
    "SLOPE_MASTER_SEED": ("experiments", "master_seed", int),
    "SLOPE_LOG_DIR": ("logging", "dir", str),
    "SLOPE_LOG_LEVEL": ("logging", "level", str),
}


class ConfigLoader:
    """Centralized configuration loader with env var override support."""

    def __init__(self, config_file: Optional[str] = None):
        """
        Initialize ConfigLoader.

        Args:
            config_file: Path to config JSON file. If None, uses SLOPE_CONFIG env var
                        or searches default locations.
        """
        self.config_file = config_file or os.getenv("SLOPE_CONFIG", "config.json")
        self.loaded_from: Optional[Path] = None
        self.config = self._load_config()

    def _load_config(self) -> Dict:
        """Load config with fallbacks and env var overrides."""
        # 1. Load from file, layered over the defaults
        config = self._merge(self._get_defaults(), self._load_json_file())

        # 2. Override with environment variables
        config = self._apply_env_overrides(config)

        return config

    def _load_json_file(self) -> Dict:
        """Load config.json with search paths."""
        search_paths = [
            Path(self.config_file),
            Path.cwd() / self.config_file,
            Path(__file__).parent / self.config_file,
            Path(__file__).parent.parent / self.config_file,
            Path(__file__).parent.parent.parent / self.config_file,
        ]

        for path in search_paths:
            if path.exists() and path.is_file():
                try:
                    with open(path, "r") as f:
                        loaded_config = json.load(f)
                    logger.debug(f"[ConfigLoader] Loaded config from: {path}")
                    self.loaded_from = path
                    return loaded_config
                except json.JSONDecodeError as e:
                    logger.warning(f"[ConfigLoader] Invalid JSON in {path}: {e}")
                    continue

        logger.debug("[ConfigLoader] No config file found, using defaults")
        return {}

    @staticmethod
    def _merge(base: Dict, override: Dict) -> Dict:
        merged = copy.deepcopy(base)
        for key, value in override.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = ConfigLoader._merge(merged[key], value)
            else:
                merged[key] = value
        return merged

    def _apply_env_overrides(self, config: Dict) -> Dict:
        """Override config with environment variables."""
        for env_name, (block, key, cast) in ENV_OVERRIDES.items():
            raw = os.getenv(env_name)
            if raw is None or raw == "":
                continue
            try:
                config.setdefault(block, {})[key] = cast(raw)
            except ValueError:
                logger.warning(f"[ConfigLoader] Ignoring {env_name}={raw!r}: not a {cast.__name__}")
        return config

    def _get_defaults(self) -> Dict:
        """Default configuration."""
        return {
            "tolerances": {
                "eq_tol": 1e-9,
                "rank_tol": 1e-10,
                "pattern_tol": 1e-4,
                "membership_tol": 1e-8,
            },
            "solver": {
                "max_iter": 50000,
                "rel_tol": 1e-10,
                "power_iters": 100,
                "check_every": 10,
            },
            "experiments": {
                "workers": 1,
                "master_seed": 20240601,
                "solver_check": 100,
                "mc_reps": 100000,
            },
            "logging": {
                "dir": "logs",
                "level": "INFO",
                "file": "slope_recovery.log",
            },
        }

    def get_tolerances(self):
        """
        Build the tolerance block shared by every numerical module.

        Returns:
            numerics.Tolerances
        """
        from slope_recovery.src.numerics import Tolerances

        return Tolerances.from_dict(self.config.get("tolerances", {}))

    def get_solver_options(self):
        """
        Build solver options from the `solver` block.

        Returns:
            solver.SolverOptions
        """
        from slope_recovery.src.solver import SolverOptions

        return SolverOptions.from_dict(self.config.get("solver", {}))

    def get(self, key: str, default=None):
        """Get a config value by key with optional default."""
        return self.config.get(key, default)

    def __getitem__(self, key: str):
        """Allow dict-like access to config."""
        return self.config[key]

    def __contains__(self, key: str) -> bool:
        """Allow 'in' operator for config keys."""
        return key in self.config


def load_config(config_file: str = "config.json") -> Dict:
    """
    Load configuration as a plain dictionary.

    Args:
        config_file: Path to config file

    Returns:
        Configuration dictionary
    """
    loader = ConfigLoader(config_file)
    return loader.config


if __name__ == "__main__":
    loader = ConfigLoader()
    print("\n=== Configuration Loaded ===")
    print(f"Source: {loader.loaded_from or 'defaults'}")
    print(f"Tolerances: {loader.config['tolerances']}")
    print(f"Solver: {loader.config['solver']}")
    print(f"Experiments: {loader.config['experiments']}")
