import os
import typing
from dataclasses import dataclass

from src.utils.errors import ValidationError


@dataclass(frozen=True)
class SampleConfig:
    checkpoints: tuple = ()
    count: int = 1
    temperature: float = 1.0
    rng_seed: int = 0
    seed_image: typing.Optional[str] = None
    seed_rows: int = 0
    out_dir: str = "samples"
    fast_mode: bool = False

    def __post_init__(self):
        checkpoints = tuple(os.fspath(c) for c in self.checkpoints)
        object.__setattr__(self, "checkpoints", checkpoints)
        if self.temperature < 0:
            raise ValidationError(f"temperature={self.temperature} must be >= 0")
        if self.count < 0:
            raise ValidationError(f"count={self.count} must be >= 0")
        if self.seed_rows < 0:
            raise ValidationError(f"seed_rows={self.seed_rows} must be >= 0")
