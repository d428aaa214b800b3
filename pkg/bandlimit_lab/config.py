"""
Configuration management for the bandlimit lab.

This module handles all configuration aspects of an experiment run, including:
- Default values for every experiment parameter
- Reading flat ``key = value`` configuration files
- Environment variable overrides (``BANDLIMIT_<KEY>``, ``.env`` supported)
- Validating parameter ranges before any computation starts

The configuration is centralized here so that every subcommand sees the same
parameters and the run manifest can snapshot them losslessly.
"""

import dataclasses
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Union

from dotenv import load_dotenv

from .manifold import create_manifold
from .utils import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "BANDLIMIT_"
FAMILY_KINDS = ("grid", "random", "perturbed", "fekete")
KERNEL_FILTERS = ("sharp", "bochner_riesz", "smooth", "smooth_squared")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

# "#" opens a comment at line start or after whitespace
COMMENT_PATTERN = re.compile(r"(^|\s)#.*$")


@dataclass
class ExperimentConfig:
    """
    All parameters of one experiment run.

    Grids are lists; optional parameters use None for "derive a default".
    """

    manifold: str = "torus2"
    L: List[float] = field(default_factory=lambda: [40.0, 60.0, 80.0])
    R: List[float] = field(default_factory=lambda: [4.0, 6.0, 8.0, 10.0])
    eps: float = 0.2
    rho: float = 0.2
    nu: float = 1.0
    gamma: List[float] = field(default_factory=lambda: [0.1, 0.5, 0.9])
    delta: List[float] = field(default_factory=lambda: [0.1, 0.5, 0.9])
    seed: int = 42
    ball_resolution: List[int] = field(default_factory=lambda: [64, 128])
    output_dir: str = "results"

    # Families
    family: str = "grid"
    perturbation: float = 0.0
    target_s: Optional[float] = None
    family_in: Optional[str] = None
    family_out: Optional[str] = None

    # Kernels
    kernel_filter: str = "smooth"
    decay_order: int = 3
    trials: int = 50

    # Sampling and concentration
    mz_factor: float = 10.0
    t: Optional[float] = None

    # Fekete
    candidate_factor: int = 4
    exchange_rounds: int = 10
    exhaustive_limit: int = 250_000
    cutoff: float = 0.5
    C_prod: Optional[float] = None
    C_grid: List[float] = field(default_factory=lambda: [0.25 * i for i in range(13)])
    cap_radii: Optional[List[float]] = None

    log_level: str = "INFO"


def _list_of(convert: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse(text: str) -> List[Any]:
        return [convert(item.strip()) for item in text.split(",") if item.strip()]

    return parse


def _int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


# field name -> text parser
_FIELD_PARSERS: Dict[str, Callable[[str], Any]] = {
    "manifold": str,
    "L": _list_of(float),
    "R": _list_of(float),
    "eps": float,
    "rho": float,
    "nu": float,
    "gamma": _list_of(float),
    "delta": _list_of(float),
    "seed": _int,
    "ball_resolution": _list_of(_int),
    "output_dir": str,
    "family": str,
    "perturbation": float,
    "target_s": float,
    "family_in": str,
    "family_out": str,
    "kernel_filter": str,
    "decay_order": _int,
    "trials": _int,
    "mz_factor": float,
    "t": float,
    "candidate_factor": _int,
    "exchange_rounds": _int,
    "exhaustive_limit": _int,
    "cutoff": float,
    "C_prod": float,
    "C_grid": _list_of(float),
    "cap_radii": _list_of(float),
    "log_level": lambda text: text.strip().upper(),
}

_OPTIONAL_FIELDS = frozenset({"target_s", "family_in", "family_out", "t", "C_prod", "cap_radii"})


def field_names() -> List[str]:
    return [f.name for f in dataclasses.fields(ExperimentConfig)]


def convert_value(key: str, raw: Any) -> Any:
    """
    Convert a raw value (text or Python object) to the type of field ``key``.

    Raises:
        ConfigError: If the key is unknown or the value does not convert
    """
    if key not in _FIELD_PARSERS:
        raise ConfigError(f"unknown configuration key {key!r}")
    if raw is None:
        if key in _OPTIONAL_FIELDS:
            return None
        raise ConfigError(f"configuration key {key!r} cannot be empty")
    if isinstance(raw, (list, tuple)):
        raw = ",".join(str(item) for item in raw)
    text = str(raw).strip()
    if text == "" and key in _OPTIONAL_FIELDS:
        return None
    try:
        return _FIELD_PARSERS[key](text)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid value for {key!r}: {raw!r} ({e})") from e


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(_format_value(item) for item in value)
    return str(value)


def dump_config(config: ExperimentConfig) -> str:
    """Serialize a config to its flat file form, one ``key = value`` per line."""
    lines = ["# bandlimit lab experiment configuration"]
    for name in field_names():
        lines.append(f"{name} = {_format_value(getattr(config, name))}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> Dict[str, Any]:
    """
    Parse flat config text into typed values.

    Blank lines and ``#`` comments are skipped; a comment starts at the
    beginning of a line or after whitespace, so ``a#b`` stays a value.
    List values are comma-separated.

    Raises:
        ConfigError: On malformed lines, unknown keys or bad values
    """
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = COMMENT_PATTERN.sub("", raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = convert_value(key, value)
    return values


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    """
    Check grids and parameter ranges.

    Raises:
        ConfigError: On the first violated constraint, including balls
            B(x, R/L) wider than the manifold's radius limit
        UnimplementedManifoldError: If the manifold has no closed-form eigendata
    """
    M = create_manifold(config.manifold)

    def require(condition: bool, message: str) -> None:
        if not condition:
            raise ConfigError(message)

    for name in ("L", "R", "gamma", "delta", "C_grid"):
        require(len(getattr(config, name)) > 0, f"grid {name!r} must be nonempty")
    require(all(L >= 1 and math.isfinite(L) for L in config.L), f"every L must be at least 1: {config.L}")
    require(all(R > 0 and math.isfinite(R) for R in config.R), f"every R must be positive: {config.R}")
    require(
        max(config.R) / min(config.L) <= M.max_radius,
        f"ball radius max(R)/min(L) = {max(config.R) / min(config.L):g} exceeds {M.max_radius:g} on {M.name}",
    )
    require(0 <= config.eps < 1, f"eps must lie in [0, 1): {config.eps}")
    require(config.rho >= 0, f"rho must be nonnegative: {config.rho}")
    require(config.nu > 0, f"nu must be positive: {config.nu}")
    require(all(0 < g < 1 for g in config.gamma), f"gamma thresholds must lie in (0, 1): {config.gamma}")
    require(all(0 < d <= 1 for d in config.delta), f"delta thresholds must lie in (0, 1]: {config.delta}")
    require(config.seed >= 0, f"seed must be nonnegative: {config.seed}")
    require(
        len(config.ball_resolution) == 2 and all(n >= 4 for n in config.ball_resolution),
        f"ball_resolution needs two sizes >= 4: {config.ball_resolution}",
    )
    require(config.family in FAMILY_KINDS, f"family must be one of {FAMILY_KINDS}: {config.family!r}")
    require(config.perturbation >= 0, f"perturbation must be nonnegative: {config.perturbation}")
    require(config.target_s is None or config.target_s > 0, f"target_s must be positive: {config.target_s}")
    require(config.kernel_filter in KERNEL_FILTERS, f"kernel_filter must be one of {KERNEL_FILTERS}")
    require(config.decay_order >= 0, f"decay_order must be nonnegative: {config.decay_order}")
    require(config.trials >= 1, f"trials must be at least 1: {config.trials}")
    require(config.mz_factor > 1, f"mz_factor must exceed 1: {config.mz_factor}")
    require(config.t is None or config.t >= 0, f"t must be nonnegative: {config.t}")
    require(config.candidate_factor >= 4, f"candidate_factor must be at least 4: {config.candidate_factor}")
    require(config.exchange_rounds >= 0, f"exchange_rounds must be nonnegative: {config.exchange_rounds}")
    require(config.exhaustive_limit >= 0, f"exhaustive_limit must be nonnegative: {config.exhaustive_limit}")
    require(0 < config.cutoff < 1, f"cutoff must lie in (0, 1): {config.cutoff}")
    require(config.C_prod is None or config.C_prod > 0, f"C_prod must be positive: {config.C_prod}")
    require(all(C >= 0 for C in config.C_grid), f"C_grid values must be nonnegative: {config.C_grid}")
    require(
        config.cap_radii is None or (len(config.cap_radii) > 0 and all(r > 0 for r in config.cap_radii)),
        f"cap_radii must be positive: {config.cap_radii}",
    )
    require(config.log_level in LOG_LEVELS, f"log_level must be one of {LOG_LEVELS}: {config.log_level!r}")
    return config


def load_config(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """
    Load configuration from defaults, a config file, the environment and overrides.

    Later sources take precedence: defaults, then the file, then
    ``BANDLIMIT_<KEY>`` environment variables, then explicit overrides
    (command-line flags). None-valued overrides are ignored.

    Args:
        config_path: Optional path to a flat ``key = value`` configuration file
        overrides: Optional mapping of field name to value

    Returns:
        ExperimentConfig: Validated configuration

    Raises:
        ConfigError: If any source is malformed or a value is out of range
    """
    config_dict: Dict[str, Any] = {}

    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            config_dict.update(parse_config_text(path.read_text(encoding="utf-8")))
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        logger.info(f"Loaded configuration from {path}")

    load_dotenv()
    for name in field_names():
        env_var = f"{ENV_PREFIX}{name.upper()}"
        if (env_value := os.getenv(env_var)) is not None:
            config_dict[name] = convert_value(name, env_value)
            logger.debug(f"Configuration {name} taken from {env_var}")

    for name, value in (overrides or {}).items():
        if value is not None:
            config_dict[name] = convert_value(name, value)

    config = ExperimentConfig(**config_dict)
    validate_config(config)
    logger.debug("Configuration loaded successfully")
    return config


def get_config(config_path: Optional[str] = None) -> ExperimentConfig:
    """
    Singleton-like access to the configuration of the current process.

    Args:
        config_path: Optional path to a configuration file, used on first call

    Returns:
        ExperimentConfig: Configuration object with all settings
    """
    if not hasattr(get_config, "_config"):
        get_config._config = load_config(config_path)
    return get_config._config
