"""
Experiment configuration.

A config file is a JSON object whose keys are ``ExperimentConfig`` fields; EM
settings live under ``"em"`` with ``EmConfig`` field names. Keys are applied one
by one: unknown keys are logged and skipped, values are validated after all
keys are in place. Example::

    {
      "d": 10, "k": 4,
      "n_obs": [1000],
      "snr_db": [0, 10, 20],
      "m_samples": [500],
      "methods": ["vca", "sisa", "lisa"],
      "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
      "alpha": 1.0,
      "em": {"total_iterations": 100, "switch_iteration": 50}
    }
"""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import orjson

from .em import EmConfig
from .errors import InvalidParameterError, ParseError
from .simplex import DirichletParams

logger = logging.getLogger(__name__)

SEED_ENV = "PRISM_SEED"
METHODS = ("vca", "sisa", "lisa")
MAX_SEED = 2 ** 64 - 1


@dataclass
class ExperimentConfig:
    d: int = 10
    k: int = 4
    n_obs: List[int] = field(default_factory=lambda: [1000])
    snr_db: List[float] = field(default_factory=lambda: [20.0])
    m_samples: List[int] = field(default_factory=lambda: [500])
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    alpha: Union[float, List[float]] = 1.0
    em: EmConfig = field(default_factory=EmConfig)
    out_dir: str = "results"
    master_seed: Optional[int] = None
    jobs: Optional[int] = None
    gnuplot: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.d < 1 or self.k < 2:
            raise InvalidParameterError(f"need d >= 1 and k >= 2, got d = {self.d}, k = {self.k}")
        if self.d < self.k:
            raise InvalidParameterError(f"need d >= k for a full-rank H, got d = {self.d}, k = {self.k}")
        for name in ("n_obs", "snr_db", "m_samples", "methods", "seeds"):
            if not getattr(self, name):
                raise InvalidParameterError(f"{name} must be non-empty")
        if any(n < 1 for n in self.n_obs):
            raise InvalidParameterError(f"n_obs entries must be positive, got {self.n_obs}")
        if any(m < 1 for m in self.m_samples):
            raise InvalidParameterError(f"m_samples entries must be positive, got {self.m_samples}")
        if any(not np.isfinite(s) for s in self.snr_db):
            raise InvalidParameterError(f"snr_db entries must be finite, got {self.snr_db}")
        self.methods = [str(m).lower() for m in self.methods]
        unknown = sorted(set(self.methods) - set(METHODS))
        if unknown:
            raise InvalidParameterError(f"unknown methods {unknown} (choose from {', '.join(METHODS)})")
        for seed in self.seeds:
            check_seed(seed)
        if self.master_seed is not None:
            check_seed(self.master_seed)
        if self.jobs is not None and self.jobs < 1:
            raise InvalidParameterError(f"jobs must be >= 1, got {self.jobs}")
        self.prior()

    def prior(self) -> DirichletParams:
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if alpha.size == 1:
            return DirichletParams.symmetric(self.k, float(alpha[0]))
        if alpha.size != self.k:
            raise InvalidParameterError(f"alpha has {alpha.size} entries, k = {self.k}")
        return DirichletParams(alpha)


def check_seed(seed: Any) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) <= MAX_SEED:
        raise InvalidParameterError(f"seeds must be integers in [0, 2^64), got {seed!r}")
    return int(seed)


def _apply_fields(target_cls, values: Dict[str, Any], section: str) -> Dict[str, Any]:
    known = {f.name for f in fields(target_cls)}
    accepted = {}
    for key, value in values.items():
        if key in known:
            accepted[key] = value
        else:
            logger.warning(f"Unknown configuration option: {section}{key}")
    return accepted


def config_from_dict(values: Dict[str, Any]) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed JSON, ignoring unknown keys with a warning."""
    if not isinstance(values, dict):
        raise InvalidParameterError("configuration must be a JSON object")
    values = dict(values)
    em_values = values.pop("em", {}) or {}
    if not isinstance(em_values, dict):
        raise InvalidParameterError("'em' must be a JSON object")
    try:
        em = EmConfig(**_apply_fields(EmConfig, em_values, "em."))
    except TypeError as exc:
        raise InvalidParameterError(f"invalid em configuration value: {exc}") from None
    accepted = _apply_fields(ExperimentConfig, values, "")
    accepted.pop("em", None)
    for key in ("n_obs", "snr_db", "m_samples", "methods", "seeds"):
        if key in accepted and not isinstance(accepted[key], list):
            accepted[key] = [accepted[key]]
    try:
        return ExperimentConfig(em=em, **accepted)
    except TypeError as exc:
        raise InvalidParameterError(f"invalid configuration value: {exc}") from None


def load_config(path: Union[str, os.PathLike]) -> ExperimentConfig:
    path = Path(path)
    try:
        values = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as exc:
        raise ParseError(str(path), exc.lineno, exc.msg) from None
    logger.info(f"Loaded configuration from {path}")
    return config_from_dict(values)


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    em = {f.name: getattr(config.em, f.name) for f in fields(EmConfig)}
    em["estep_backend"] = config.em.estep_backend.value
    values = {f.name: getattr(config, f.name) for f in fields(ExperimentConfig) if f.name != "em"}
    values["em"] = em
    return values


def with_overrides(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """Copy of ``config`` with the non-None overrides applied; EM keys go to ``config.em``."""
    em_names = {f.name for f in fields(EmConfig)}
    em_changes = {k: v for k, v in overrides.items() if k in em_names and v is not None}
    top_changes = {k: v for k, v in overrides.items() if k not in em_names and v is not None}
    em = config.em
    if em_changes:
        if "total_iterations" in em_changes and "switch_iteration" not in em_changes:
            em_changes["switch_iteration"] = min(em.switch_iteration, em_changes["total_iterations"])
        em = replace(em, **em_changes)
    return replace(config, em=em, **top_changes)


def resolve_master_seed(cli_seed: Optional[int], config: Optional[ExperimentConfig] = None) -> int:
    """--seed, then the config's master_seed, then $PRISM_SEED, else 0."""
    if cli_seed is not None:
        return check_seed(cli_seed)
    if config is not None and config.master_seed is not None:
        return check_seed(config.master_seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return check_seed(int(env))
        except ValueError:
            raise InvalidParameterError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0
