from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..exceptions import ConfigurationError

PRIORS = ("rigid", "isometric", "arap")
EMBEDDING_INITS = ("random", "flow")


@dataclass(frozen=True)
class SolverConfig:
    """Optimization schedule and objective settings.

    An epoch is ``steps_per_epoch`` passes over the consecutive view pairs, one
    Adam step per pair and pass, each on a freshly sampled edge set.
    """

    stage1_epochs: int = 20
    stage2_epochs: int = 30
    steps_per_epoch: int = 100
    learning_rate: float = 0.02
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-15
    tau: float = 0.2
    beta_reg: float = 0.01
    reg_sign: int = -1
    alpha_mode: str = "normalized"
    sample_size: int = 100_000
    seed: int = 0
    deterministic: bool = True
    d_min: float = 0.1
    d_max: float = 10.0
    embedding_dim: int = 3
    embedding_init_scale: float = 0.5
    embedding_init: str = "random"
    iso_radius: float = 15.0

    def __post_init__(self):
        for name in ("stage1_epochs", "stage2_epochs"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        for name in ("steps_per_epoch", "lr_decay_every", "sample_size", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        for name in ("learning_rate", "lr_decay_factor", "adam_epsilon", "iso_radius"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must lie in [0, 1)")
        if not 0 <= self.tau < 1:
            raise ConfigurationError(f"tau must lie in [0, 1), got {self.tau}")
        if self.beta_reg < 0:
            raise ConfigurationError("beta_reg must be nonnegative")
        if self.embedding_init_scale < 0:
            raise ConfigurationError("embedding_init_scale must be nonnegative")
        if self.embedding_init not in EMBEDDING_INITS:
            raise ConfigurationError(f"embedding_init must be one of {EMBEDDING_INITS}, got {self.embedding_init!r}")
        if self.reg_sign not in (1, -1):
            raise ConfigurationError(f"reg_sign must be +1 or -1, got {self.reg_sign}")
        if self.alpha_mode not in ("normalized", "raw"):
            raise ConfigurationError(f"alpha_mode must be 'normalized' or 'raw', got {self.alpha_mode!r}")
        if not 0 < self.d_min < self.d_max:
            raise ConfigurationError("depth bounds need 0 < d_min < d_max")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        unknown = set(data) - set(cls.field_names())
        if unknown:
            raise ConfigurationError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay_factor ** (epoch // self.lr_decay_every)
