import math
import typing
from dataclasses import dataclass, field

import numpy as np
from aenum import MultiValueEnum

from src.numerics import Tensor
from src.utils.errors import ValidationError

# smallest logistic scale a mixture head may express
MIN_LOG_SCALE = math.log(1e-3)


class MaskKind(MultiValueEnum):
    A = "A", "a"
    B = "B", "b"


class HeadKind(MultiValueEnum):
    CATEGORICAL = "categorical", "softmax"
    LOGISTIC_MIXTURE = "logistic_mixture", "dlm"


@dataclass(frozen=True)
class CategoricalHead:
    num_categories: int = 256
    kind: HeadKind = field(default=HeadKind.CATEGORICAL, init=False)

    def __post_init__(self):
        if not 2 <= self.num_categories <= 256:
            raise ValidationError(
                f"num_categories must be in 2..256, got {self.num_categories}"
            )

    @property
    def channels(self) -> int:
        return self.num_categories


@dataclass(frozen=True)
class LogisticMixtureHead:
    num_components: int = 1
    kind: HeadKind = field(default=HeadKind.LOGISTIC_MIXTURE, init=False)

    def __post_init__(self):
        if self.num_components < 1:
            raise ValidationError(
                f"num_components must be >= 1, got {self.num_components}"
            )

    @property
    def channels(self) -> int:
        # mixture logits, means and log-scales
        return 3 * self.num_components


Head = typing.Union[CategoricalHead, LogisticMixtureHead]


@dataclass(frozen=True)
class ModelConfig:
    image_h: int = 48
    image_w: int = 192
    channels: int = 1
    num_resnet: int = 3
    num_filters: int = 32
    receptive_field: tuple = (5, 7)
    dropout_p: float = 0.3
    head: Head = field(default_factory=LogisticMixtureHead)

    def __post_init__(self):
        object.__setattr__(self, "receptive_field", tuple(self.receptive_field))
        rows, cols = self.receptive_field
        if rows < 1:
            raise ValidationError(f"receptive_field rows R={rows} must be >= 1")
        if cols % 2 == 0:
            raise ValidationError(f"receptive_field cols C={cols} must be odd")
        if self.channels != 1:
            raise ValidationError(f"only grayscale is supported, channels={self.channels}")
        if self.num_filters < 2 or self.num_filters % 2:
            raise ValidationError(f"num_filters F={self.num_filters} must be even")
        if self.num_resnet < 0:
            raise ValidationError(f"num_resnet={self.num_resnet} must be >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValidationError(f"dropout_p={self.dropout_p} must be in [0, 1)")
        if self.image_h < 1 or self.image_w < 1:
            raise ValidationError(
                f"image dims must be positive, got {self.image_h}x{self.image_w}"
            )

    @property
    def input_kernel(self) -> tuple:
        """First-layer kernel: (2R - 1) rows by C cols."""
        rows, cols = self.receptive_field
        return 2 * rows - 1, cols

    @property
    def image_shape(self) -> tuple:
        return self.image_h, self.image_w, self.channels


@dataclass
class PixelDistribution:
    """Per-pixel head parameters of one forward pass."""

    head: Head
    logits: Tensor = None
    mixture_logits: Tensor = None
    means: Tensor = None
    log_scales: Tensor = None

    @property
    def tensors(self) -> tuple:
        if self.head.kind is HeadKind.CATEGORICAL:
            return (self.logits,)
        return self.mixture_logits, self.means, self.log_scales

    @property
    def shape(self) -> tuple:
        return self.tensors[0].shape[:3]

    def pixel(self, n: int, y: int, x: int) -> tuple:
        """Head parameters of a single pixel as float64 vectors."""
        return tuple(t.data[n, y, x].astype(np.float64) for t in self.tensors)

    def stacked(self) -> np.ndarray:
        return np.concatenate([t.data for t in self.tensors], axis=-1)
