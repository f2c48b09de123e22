import math
from dataclasses import dataclass

from src.utils.errors import ValidationError


@dataclass(frozen=True)
class QuantizerConfig:
    """Partition of 0..255 into ``num_bins`` contiguous intervals."""

    num_bins: int = 256

    def __post_init__(self):
        if not 2 <= self.num_bins <= 256:
            raise ValidationError(f"num_bins must be in 2..256, got {self.num_bins}")


@dataclass(frozen=True)
class NllReport:
    total_nats: float
    pixel_count: int

    @property
    def bits_per_dim(self) -> float:
        if not self.pixel_count:
            return 0.0
        return self.total_nats / (self.pixel_count * math.log(2))

    @property
    def nats_per_dim(self) -> float:
        return self.total_nats / self.pixel_count if self.pixel_count else 0.0

    def __add__(self, other: "NllReport") -> "NllReport":
        return NllReport(
            total_nats=self.total_nats + other.total_nats,
            pixel_count=self.pixel_count + other.pixel_count,
        )
