import typing
from dataclasses import dataclass, field

from src.models.pixelcnn import ModelConfig
from src.numerics import ParamSet
from src.utils.errors import ValidationError


@dataclass(frozen=True)
class TrainConfig:
    data_dir: str = "data/bridges"
    model: ModelConfig = field(default_factory=ModelConfig)
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 1
    max_steps: typing.Optional[int] = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rng_seed: int = 0
    checkpoint_every: typing.Optional[int] = None
    checkpoint_dir: typing.Optional[str] = None
    metrics_path: typing.Optional[str] = None
    crop: typing.Optional[tuple] = None
    crop_origin: typing.Optional[tuple] = None
    max_images: typing.Optional[int] = None

    def __post_init__(self):
        if self.crop is not None:
            object.__setattr__(self, "crop", tuple(self.crop))
        if self.crop_origin is not None:
            if self.crop is None:
                raise ValidationError("crop_origin requires crop")
            object.__setattr__(self, "crop_origin", tuple(self.crop_origin))
        if self.batch_size < 1:
            raise ValidationError(f"batch_size={self.batch_size} must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate={self.learning_rate} must be > 0")
        if self.epochs < 0:
            raise ValidationError(f"epochs={self.epochs} must be >= 0")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ValidationError(
                f"checkpoint_every={self.checkpoint_every} must be >= 1"
            )


@dataclass
class AdamState:
    """First and second moment estimates, keyed by parameter name."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ParamSet
    moments: AdamState = field(default_factory=AdamState)
    step: int = 0
    rng_state: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MetricRow:
    step: int
    epoch: int
    split: str
    bits_per_dim: float
