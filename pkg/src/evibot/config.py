"""Run configuration: training hyperparameters and dataset profiles.

Two named profiles ship with the package.  `small` targets datasets in
the Cresci-15 / TwiBot-20 size range and is the default for synthetic
runs; `large` targets TwiBot-22-scale data.  Config files are flat
`key = value` lines layered on top of a profile; unknown keys are
rejected rather than ignored so typos cannot silently change a run.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError

PROFILES: dict[str, dict] = {
    "small": {
        "stage1_lr": 1e-2,
        "stage1_dropout": 0.2,
        "lambda1": 0.8,
        "hidden_size": 32,
        "stage1_epochs": 200,
        "stage2_lr": 5e-5,
        "lambda2": 0.7,
        "stage2_dropout": 0.0,
        "stage2_epochs": 100,
    },
    "large": {
        "stage1_lr": 1e-2,
        "stage1_dropout": 0.2,
        "lambda1": 0.1,
        "hidden_size": 32,
        "stage1_epochs": 3000,
        "stage2_lr": 1e-5,
        "lambda2": 0.5,
        "stage2_dropout": 0.0,
        "stage2_epochs": 50,
    },
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    profile: str = "small"
    hidden_size: int = 32
    layers: int = 2
    lambda1: float = 0.8
    lambda2: float = 0.7
    stage1_lr: float = 1e-2
    stage1_dropout: float = 0.2
    stage1_epochs: int = 200
    stage2_lr: float = 5e-5
    stage2_dropout: float = 0.0
    stage2_epochs: int = 100
    activation: str = "leaky_relu"
    tau: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.lambda1 <= 1.0:
            raise ConfigError(f"lambda1 must lie in [0, 1], got {self.lambda1}")
        if not 0.0 <= self.lambda2 <= 1.0:
            raise ConfigError(f"lambda2 must lie in [0, 1], got {self.lambda2}")
        if self.hidden_size % 4 != 0 or self.hidden_size <= 0:
            raise ConfigError(
                f"hidden_size must be a positive multiple of 4, got {self.hidden_size}"
            )
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        for name in ("stage1_lr", "stage2_lr", "tau"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("stage1_dropout", "stage2_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(
                    f"{name} must lie in [0, 1), got {getattr(self, name)}"
                )
        for name in ("stage1_epochs", "stage2_epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.profile not in PROFILES:
            raise ConfigError(
                f"unknown profile '{self.profile}'; expected one of {sorted(PROFILES)}"
            )


def from_profile(profile: str, seed: int = 0, **overrides) -> RunConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile '{profile}'; expected one of {sorted(PROFILES)}")
    return replace(RunConfig(seed=seed, profile=profile, **PROFILES[profile]), **overrides)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_INT_KEYS = {"seed", "hidden_size", "layers", "stage1_epochs", "stage2_epochs"}
_STR_KEYS = {"profile", "activation"}


def read_kv_file(path, known_keys) -> dict[str, str]:
    """Read flat `key = value` lines (# comments allowed) against a schema."""
    raw: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path} line {lineno}: expected key = value")
            key, _, value = stripped.partition("=")
            key, value = key.strip(), value.strip()
            if key not in known_keys:
                raise ConfigError(f"{path} line {lineno}: unknown config key '{key}'")
            if key in raw:
                raise ConfigError(f"{path} line {lineno}: duplicate key '{key}'")
            raw[key] = value
    return raw


def parse_config_file(path) -> RunConfig:
    """Read `key = value` lines (# comments allowed); keys mirror RunConfig."""
    raw = read_kv_file(path, _FIELD_TYPES)

    profile = raw.pop("profile", "small")
    kwargs: dict = {}
    for key, value in raw.items():
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _STR_KEYS:
                kwargs[key] = value
            else:
                kwargs[key] = float(value)
        except ValueError as e:
            raise ConfigError(f"{path}: bad value for '{key}': {value!r}") from e
    return from_profile(profile, **kwargs)


def config_to_text(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"
