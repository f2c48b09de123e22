import collections
import typing
from dataclasses import dataclass, field

import numpy as np
from aenum import Enum, MultiValueEnum

from src.utils.errors import ValidationError

# structure on white background
STRUCTURE = 0
BACKGROUND = 255

# side margin kept free on both ends of the deck
MARGIN_PX = 6


class Family(Enum):
    BEAM = "beam"
    ARCH = "arch"
    CABLE_STAYED = "cable_stayed"
    SUSPENSION = "suspension"


class Subtype(MultiValueEnum):
    EQUAL_SECTION_BEAM = "equal_section_beam", "equal-section-beam"
    V_PIER_RIGID_FRAME = "v_pier_rigid_frame", "v-pier-rigid-frame"
    TOP_BEARING_ARCH = "top_bearing_arch", "top-bearing-arch"
    BOTTOM_BEARING_ARCH = "bottom_bearing_arch", "bottom-bearing-arch"
    HARP_CABLE_STAYED = "harp_cable_stayed", "harp-cable-stayed"
    FAN_CABLE_STAYED = "fan_cable_stayed", "fan-cable-stayed"
    VERTICAL_SLING_SUSPENSION = "vertical_sling_suspension", "vertical-sling-suspension"
    DIAGONAL_SLING_SUSPENSION = "diagonal_sling_suspension", "diagonal-sling-suspension"

    @property
    def family(self) -> Family:
        return _FAMILIES[self]

    @property
    def span_m(self) -> tuple:
        return (80, 140, 80) if self.family is Family.BEAM else (67, 166, 67)


_FAMILIES = {
    Subtype.EQUAL_SECTION_BEAM: Family.BEAM,
    Subtype.V_PIER_RIGID_FRAME: Family.BEAM,
    Subtype.TOP_BEARING_ARCH: Family.ARCH,
    Subtype.BOTTOM_BEARING_ARCH: Family.ARCH,
    Subtype.HARP_CABLE_STAYED: Family.CABLE_STAYED,
    Subtype.FAN_CABLE_STAYED: Family.CABLE_STAYED,
    Subtype.VERTICAL_SLING_SUSPENSION: Family.SUSPENSION,
    Subtype.DIAGONAL_SLING_SUSPENSION: Family.SUSPENSION,
}


@dataclass(frozen=True)
class BridgeSpec:
    subtype: Subtype
    span_m: tuple
    deck_y: int
    tower_or_arch_rise_px: int
    member_thickness_px: int
    cable_count: int
    seed: int
    width: int = 192
    height: int = 48
    jitter: dict = field(default_factory=dict)

    @property
    def family(self) -> Family:
        return self.subtype.family

    @property
    def px_per_m(self) -> float:
        return (self.width - 2 * MARGIN_PX) / sum(self.span_m)


@dataclass
class RasterImage:
    """Grayscale image, one byte per pixel in raster order."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise ValidationError(f"image must be 2-D (height, width), got {pixels.shape}")
        if pixels.dtype != np.uint8:
            if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
                raise ValidationError("pixel values must be in 0..255")
            pixels = pixels.astype(np.uint8)
        self.pixels = pixels

    @classmethod
    def blank(cls, width: int = 192, height: int = 48) -> "RasterImage":
        return cls(np.full((height, width), BACKGROUND, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def asymmetry(self) -> float:
        """Fraction of pixels differing from their horizontal mirror."""
        return float(np.mean(self.pixels != self.pixels[:, ::-1]))

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class ManifestRecord:
    file: str
    subtype: Subtype
    seed: int


@dataclass
class DatasetManifest:
    records: typing.List[ManifestRecord] = field(default_factory=list)

    @property
    def counts(self) -> dict:
        return dict(collections.Counter(r.subtype.value for r in self.records))

    def __len__(self):
        return len(self.records)
