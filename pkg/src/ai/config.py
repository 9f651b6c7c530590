"""
Model and training configuration.
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ..exceptions import ConfigurationError
from ..settings import DEFAULT_LANG_IDS


class Stage(str, Enum):
    NMT = "nmt"
    SYNTHETIC_PHASE1 = "synthetic-phase1"
    SYNTHETIC_PHASE2 = "synthetic-phase2"
    FINETUNE = "finetune"


class TrainMode(str, Enum):
    SINGLE = "single"
    LS_MTL = "ls-mtl"
    NASH_MTL = "nash-mtl"
    DOMAIN_ADAPT = "domain-adapt"


class ModelConfig(BaseModel):
    """Architecture hyperparameters and the special-token layout."""
    vocab_size: int = Field(gt=0)
    embed_dim: int = Field(default=256, gt=0)
    ff_dim: int = Field(default=1024, gt=0)
    encoder_layers: int = Field(default=6, gt=0)
    decoder_layers: int = Field(default=6, gt=0)
    heads: int = Field(default=8, gt=0)
    max_len: int = Field(default=128, gt=2)
    adapter_dim: int = Field(default=512, ge=1)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    pad_id: int = 0
    bos_id: int = 1
    eos_id: int = 2
    unk_id: int = 3
    sep_id: int = 4
    lang_ids: List[str] = Field(default_factory=lambda: list(DEFAULT_LANG_IDS))
    strict_length: bool = False

    @field_validator('heads')
    @classmethod
    def validate_heads(cls, v, info):
        """embed_dim must split evenly across heads."""
        embed_dim = info.data.get('embed_dim')
        if embed_dim is not None and embed_dim % v != 0:
            raise ValueError(f"embed_dim {embed_dim} is not divisible by heads {v}")
        return v

    @model_validator(mode='after')
    def validate_special_tokens(self):
        """Special token ids must be distinct and inside the vocabulary."""
        specials = [self.pad_id, self.bos_id, self.eos_id, self.unk_id, self.sep_id]
        if len(set(specials)) != len(specials):
            raise ValueError(f"Special token ids must be distinct: {specials}")
        if max(specials) >= self.vocab_size:
            raise ValueError("Special token ids must be smaller than vocab_size")
        if len(set(self.lang_ids)) != len(self.lang_ids):
            raise ValueError(f"Duplicate LangIds: {self.lang_ids}")
        return self


PROFILES: Dict[str, Dict[str, Any]] = {
    "full": {},
    "desk": {"warmup_steps": 500, "max_epochs": 200},
}


class TrainConfig(BaseModel):
    """Optimization settings for one CTS stage or the whole run."""
    batch_size: int = Field(default=32, gt=0)
    learning_rate: float = Field(default=5e-5, gt=0)
    adam_betas: Tuple[float, float] = (0.9, 0.997)
    warmup_steps: int = Field(default=15000, gt=0)
    patience: int = Field(default=5, gt=0)
    max_epochs: int = Field(default=10000, gt=0)
    seed: int = 17
    stage: Stage = Stage.FINETUNE
    mode: TrainMode = TrainMode.SINGLE
    ape_reduction: str = "mean"
    beam: int = Field(default=5, ge=1)
    length_penalty: float = Field(default=1.0, ge=0.0)
    nash_tol: float = Field(default=1e-8, gt=0)
    nash_max_iters: int = Field(default=200, gt=0)
    adapter_dim: int = Field(default=512, ge=1)
    max_decode_len: int = Field(default=64, gt=0)
    grad_clip: Optional[float] = None
    profile: str = "full"

    @field_validator('ape_reduction')
    @classmethod
    def validate_reduction(cls, v):
        """Only sum and mean reductions of the APE loss exist."""
        if v not in {'sum', 'mean'}:
            raise ValueError(f"Invalid APE loss reduction: {v}")
        return v

    @field_validator('adam_betas')
    @classmethod
    def validate_betas(cls, v):
        """Adam betas must lie in [0, 1)."""
        if not all(0.0 <= beta < 1.0 for beta in v):
            raise ValueError(f"Invalid Adam betas: {v}")
        return v

    @field_validator('profile')
    @classmethod
    def validate_profile(cls, v):
        """Profile must be one of the known presets."""
        if v not in PROFILES:
            raise ValueError(f"Unknown profile: {v}")
        return v

    @classmethod
    def for_profile(cls, profile: str = "full", **overrides: Any) -> 'TrainConfig':
        """Build a config from a preset plus explicit overrides."""
        if profile not in PROFILES:
            raise ConfigurationError(f"Unknown profile: {profile}. Valid profiles are: {', '.join(PROFILES)}")
        try:
            return cls(**{**PROFILES[profile], **overrides, 'profile': profile})
        except ValidationError as e:
            raise ConfigurationError(f"Invalid training configuration: {str(e)}")

    def with_overrides(self, **overrides: Any) -> 'TrainConfig':
        try:
            return TrainConfig(**{**self.model_dump(), **overrides})
        except ValidationError as e:
            raise ConfigurationError(f"Invalid training configuration: {str(e)}")


def _coerce(key: str, value: str) -> Any:
    if key == 'adam_betas':
        return tuple(float(part) for part in value.split(','))
    if key == 'grad_clip' and value.lower() in {'', 'none'}:
        return None
    return value


def load_train_config(path: Union[str, Path], **overrides: Any) -> TrainConfig:
    """Read a flat ``KEY=value`` config file into a TrainConfig.

    Keys match TrainConfig field names case-insensitively. A ``profile`` key
    selects the preset the other keys are applied on top of.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Config file not found: {path}")
    values = {key.lower(): value for key, value in dotenv_values(path).items() if value is not None}
    unknown = set(values) - set(TrainConfig.model_fields)
    if unknown:
        raise ConfigurationError(f"Unknown config keys in {path}: {', '.join(sorted(unknown))}")
    profile = values.pop('profile', overrides.pop('profile', 'full'))
    fields = {key: _coerce(key, value) for key, value in values.items()}
    return TrainConfig.for_profile(profile, **{**fields, **overrides})
