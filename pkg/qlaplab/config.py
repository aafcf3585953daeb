"""Run configuration: defaults, JSON config files and command-line overrides."""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from .base import ConfigError
from .geometry import DEFAULT_EPS_BOUND, DictionaryFunction, KahlerStructure

logger = logging.getLogger(__name__)

CONFIG_ENV = "QLAPLAB_CONFIG"
OUTPUT_ENV = "QLAPLAB_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "./qlaplab-out"
FORMATS = ("csv", "json")
TARGETS = ("rho", "tt", "qlap")

DEFAULT_TOLERANCES: Dict[str, float] = {
    "gram": 1e-12,
    "bergman": 1e-10,
    "adjoint": 1e-10,
    "toeplitz": 1e-10,
    "kernel": 1e-8,
    "trace": 1e-6,
    "route": 1e-8,
    "balanced": 1e-8,
    "hermitian": 1e-9,
    "p0": 0.02,
    "p1": 0.05,
    "a1": 0.02,
    "slope": 0.4,
    "determinism": 1e-14,
}


def default_output_dir() -> str:
    return os.getenv(OUTPUT_ENV) or DEFAULT_OUTPUT_DIR


@dataclass(frozen=True)
class RunConfig:
    """Immutable settings of one qlaplab run."""
    geometry: str = "fs"
    m: int = 8
    m_list: Tuple[int, ...] = (16, 24, 32, 48, 64)
    holdout: Optional[int] = 96
    ns: Optional[int] = None
    ntheta: Optional[int] = None
    dense_cap: int = 4096
    output_dir: str = field(default_factory=default_output_dir)
    formats: Tuple[str, ...] = FORMATS
    seed: int = 0
    workers: int = 1
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    dump_gram: bool = False
    reference_perturbation: str = "fs+0.1*u1"
    eps_bound: float = DEFAULT_EPS_BOUND
    eval_ns: int = 32
    eval_ntheta: int = 32
    f: str = "u1"
    target: str = "qlap"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Check every field; raises ConfigError on the first problem."""
        if self.m < 1:
            raise ConfigError(f"Level m must be >= 1, got {self.m}")
        if not self.m_list or any(m < 1 for m in self.m_list):
            raise ConfigError(f"m-list must hold positive levels, got {list(self.m_list)}")
        if list(self.m_list) != sorted(set(self.m_list)):
            raise ConfigError(f"m-list must be strictly increasing, got {list(self.m_list)}")
        if self.holdout is not None and self.holdout in self.m_list:
            raise ConfigError(f"Held-out level {self.holdout} is also in the m-list")
        for name in ("ns", "ntheta"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.dense_cap < 1:
            raise ConfigError(f"dense_cap must be positive, got {self.dense_cap}")
        unknown = set(self.formats) - set(FORMATS)
        if unknown:
            raise ConfigError(f"Unknown output formats: {sorted(unknown)}")
        if self.target not in TARGETS:
            raise ConfigError(f"Unknown expansion target {self.target!r}; use one of {TARGETS}")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"Unknown tolerance names: {sorted(unknown)}")
        for name, value in self.tolerances.items():
            if not value > 0:
                raise ConfigError(f"Tolerance '{name}' must be positive, got {value}")
        self.kahler()
        self.reference_kahler()
        self.function()

    def kahler(self) -> KahlerStructure:
        return KahlerStructure.parse(self.geometry, self.eps_bound)

    def reference_kahler(self) -> KahlerStructure:
        return KahlerStructure.parse(self.reference_perturbation, self.eps_bound)

    def function(self) -> DictionaryFunction:
        return DictionaryFunction.parse(self.f)

    def tolerance(self, name: str) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data

    def canonical(self) -> str:
        """Sorted-key compact JSON; ``from_canonical`` inverts it exactly."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_canonical(cls, text: str) -> "RunConfig":
        return cls.from_mapping(json.loads(text))

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: Optional["RunConfig"] = None) -> "RunConfig":
        """Overlay ``data`` on ``base`` (defaults when None); unknown keys are rejected."""
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        values = {k: _coerce(k, v) for k, v in data.items()}
        if "tolerances" in values:
            merged = dict(base.tolerances if base else DEFAULT_TOLERANCES)
            merged.update(values["tolerances"])
            values["tolerances"] = merged
        try:
            return replace(base, **values) if base else cls(**values)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid configuration: {e}") from e


def _coerce(key: str, value: Any) -> Any:
    if key in ("m_list", "formats") and isinstance(value, (list, tuple)):
        return tuple(value)
    if key == "m_list" and isinstance(value, str):
        return parse_m_list(value)
    if key == "formats" and isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if key == "tolerances":
        if not isinstance(value, Mapping):
            raise ConfigError(f"tolerances must be a mapping, got {type(value).__name__}")
        try:
            return {str(k): float(v) for k, v in value.items()}
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Tolerances must be numbers: {e}") from e
    return value


def parse_m_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        raise ConfigError(f"Malformed m-list: {text!r}") from e


def parse_tolerance_overrides(items) -> Dict[str, float]:
    """``name=value`` pairs from repeated --tol flags."""
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"Tolerance override must be name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError as e:
            raise ConfigError(f"Tolerance '{name}' is not a number: {value!r}") from e
    return out


def load_config_file(path: Optional[str] = None) -> Dict[str, Any]:
    """Read a JSON config file; a missing file gives an empty mapping.

    The path defaults to the QLAPLAB_CONFIG environment variable.
    """
    path_str = path or os.getenv(CONFIG_ENV)
    if not path_str:
        return {}
    config_path = Path(path_str).expanduser()
    if not config_path.exists():
        if path:
            raise ConfigError(f"Config file not found: {config_path}")
        logger.warning(f"{CONFIG_ENV} points to missing file {config_path}; using defaults")
        return {}
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error loading config: {e}")
        raise ConfigError(f"Cannot read config file {config_path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {config_path} must hold a JSON object")
    logger.info(f"Loaded configuration from {config_path}")
    return data


# command-line attribute -> RunConfig field
FLAG_FIELDS = {
    "geom": "geometry",
    "m": "m",
    "m_list": "m_list",
    "holdout": "holdout",
    "ns": "ns",
    "ntheta": "ntheta",
    "dense_cap": "dense_cap",
    "output_dir": "output_dir",
    "formats": "formats",
    "seed": "seed",
    "workers": "workers",
    "dump_gram": "dump_gram",
    "f": "f",
    "target": "target",
}


def parse_config(args: Any = None, config_file: Optional[str] = None) -> RunConfig:
    """Resolve a RunConfig with precedence flags > config file > defaults.

    Args:
        args: argparse namespace or mapping; attributes left as ``None``
            (or ``False`` for switches) count as not given.
        config_file: Explicit config path; falls back to ``args.config``
            and then to the QLAPLAB_CONFIG environment variable.

    Raises:
        ConfigError: On unknown keys, malformed values or geometry specs.
    """
    if args is None:
        flags: Dict[str, Any] = {}
    elif isinstance(args, Mapping):
        flags = dict(args)
    else:
        flags = vars(args)
    config_file = config_file or flags.get("config")

    cfg = RunConfig.from_mapping(load_config_file(config_file))

    overrides = {}
    for flag, name in FLAG_FIELDS.items():
        value = flags.get(flag)
        if value is None or value is False:
            continue
        overrides[name] = value
    tol = parse_tolerance_overrides(flags.get("tol"))
    if tol:
        overrides["tolerances"] = tol
    cfg = RunConfig.from_mapping(overrides, base=cfg)
    logger.debug(f"Resolved configuration {cfg.canonical()}")
    return cfg
