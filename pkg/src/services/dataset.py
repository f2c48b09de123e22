"""Procedural bridge facade corpus.

Every image is a black-on-white elevation of a three-span bridge. Geometry is
laid out on the left half of the canvas and mirrored, so renders are exactly
symmetric about the vertical centerline.
"""
import json
import logging
import os
import typing
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from marshmallow import ValidationError as SchemaError

from src.models.bridge import (
    BACKGROUND,
    MARGIN_PX,
    STRUCTURE,
    BridgeSpec,
    DatasetManifest,
    Family,
    ManifestRecord,
    RasterImage,
    Subtype,
)
from src.schemas.serializers.dataset import ManifestRecordSchema
from src.services.pgm import read_pgm, write_pgm
from src.utils.errors import FormatError, StorageError, ValidationError

__all__ = (
    "MANIFEST_FILE",
    "generate_spec",
    "render",
    "build_dataset",
    "read_manifest",
    "load_images",
)

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"

# nominal layout at 48 rows: deck row, rise of tower/arch in px, members per half
_NOMINAL = {
    Subtype.EQUAL_SECTION_BEAM: (20, 0, 0),
    Subtype.V_PIER_RIGID_FRAME: (20, 12, 0),
    Subtype.TOP_BEARING_ARCH: (14, 24, 6),
    Subtype.BOTTOM_BEARING_ARCH: (34, 24, 7),
    Subtype.HARP_CABLE_STAYED: (32, 24, 6),
    Subtype.FAN_CABLE_STAYED: (32, 24, 6),
    Subtype.VERTICAL_SLING_SUSPENSION: (32, 24, 8),
    Subtype.DIAGONAL_SLING_SUSPENSION: (32, 24, 8),
}

_NOMINAL_HEIGHT = 48


def _subtype(value) -> Subtype:
    if isinstance(value, Subtype):
        return value
    try:
        return Subtype(value)
    except ValueError:
        raise ValidationError(f"unknown subtype {value!r}") from None


def image_seed(master_seed: int, subtype: Subtype, variant_index: int) -> int:
    """Per-image u64 seed derived from the master seed."""
    index = list(Subtype).index(subtype)
    sequence = np.random.SeedSequence([master_seed, index, variant_index])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def generate_spec(
    subtype,
    variant_index: int,
    master_seed: int,
    per_subtype: typing.Optional[int] = None,
    width: int = 192,
    height: int = 48,
    jitter: bool = True,
) -> BridgeSpec:
    """Deterministic jittered spec of one bridge variant.

    With ``jitter=False`` the nominal geometry of the subtype is returned.
    """
    subtype = _subtype(subtype)
    if variant_index < 0 or (per_subtype is not None and variant_index >= per_subtype):
        raise ValidationError(
            f"variant_index={variant_index} out of range for per_subtype={per_subtype}"
        )
    seed = image_seed(master_seed, subtype, variant_index)
    deck_y, rise, members = _NOMINAL[subtype]
    ratio = height / _NOMINAL_HEIGHT
    deck_y, rise = round(deck_y * ratio), round(rise * ratio)

    offsets = {"deck_y": 0, "rise": 1.0, "thickness": 2, "members": 0}
    if jitter:
        rng = np.random.default_rng(seed)
        offsets = {
            "deck_y": int(rng.integers(-2, 3)),
            "rise": float(rng.uniform(0.85, 1.15)),
            "thickness": int(rng.integers(1, 3)),
            "members": int(rng.integers(-1, 2)),
        }
    return BridgeSpec(
        subtype=subtype,
        span_m=subtype.span_m,
        deck_y=deck_y + round(offsets["deck_y"] * ratio),
        tower_or_arch_rise_px=round(rise * offsets["rise"]),
        member_thickness_px=offsets["thickness"],
        cable_count=max(members + offsets["members"], 2) if members else 0,
        seed=seed,
        width=width,
        height=height,
        jitter=offsets,
    )


class _Canvas:
    def __init__(self, width: int, height: int):
        self.pixels = np.full((height, width), BACKGROUND, dtype=np.uint8)
        self.height, self.width = height, width

    def dot(self, x: int, y: int, thickness: int = 1):
        y0, x0 = max(y, 0), max(x, 0)
        self.pixels[y0 : y + thickness, x0 : x + thickness] = STRUCTURE

    def line(self, x0: int, y0: int, x1: int, y1: int, thickness: int = 1):
        """Integer midpoint line covering every octant."""
        dx, dy = abs(x1 - x0), -abs(y1 - y0)
        sx, sy = (1 if x0 < x1 else -1), (1 if y0 < y1 else -1)
        err = dx + dy
        while True:
            self.dot(x0, y0, thickness)
            if x0 == x1 and y0 == y1:
                break
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                x0 += sx
            if e2 <= dx:
                err += dx
                y0 += sy

    def rows(self, y0: int, y1: int, x0: int = 0, x1: int = None):
        self.pixels[max(y0, 0) : y1 + 1, x0:x1] = STRUCTURE

    def column(self, x: int, y0: int, y1: int, thickness: int = 1):
        top, bottom = min(y0, y1), max(y0, y1)
        self.pixels[max(top, 0) : bottom + 1, max(x, 0) : x + thickness] = STRUCTURE

    def parabola(self, x0: int, x1: int, y_end: int, y_mid: int, thickness: int = 1):
        """Vertical-axis parabola through (x0, y_end), (x1, y_end), apex y_mid."""
        previous = None
        for x in range(x0, x1 + 1):
            y = _parabola_y(x, x0, x1, y_end, y_mid)
            if previous is not None:
                self.column(x, previous, y, thickness)
            self.dot(x, y, thickness)
            previous = y

    def mirrored(self) -> RasterImage:
        return RasterImage(np.minimum(self.pixels, self.pixels[:, ::-1]))


def _parabola_y(x: int, x0: int, x1: int, y_end: int, y_mid: int) -> int:
    half = (x1 - x0) / 2
    t = (x - (x0 + x1) / 2) / half
    return round(y_mid + (y_end - y_mid) * t * t)


def _validate(spec: BridgeSpec):
    h = spec.height
    t = spec.member_thickness_px
    if not 2 <= spec.deck_y <= h - 3 - t:
        raise ValidationError(f"deck_y={spec.deck_y} outside canvas rows 2..{h - 3 - t}")
    if t not in (1, 2):
        raise ValidationError(f"member_thickness_px={t} must be 1 or 2")
    rise = spec.tower_or_arch_rise_px
    family = spec.family
    if family in (Family.CABLE_STAYED, Family.SUSPENSION) or (
        spec.subtype is Subtype.BOTTOM_BEARING_ARCH
    ):
        if spec.deck_y - rise < 1:
            raise ValidationError(
                f"tower_or_arch_rise_px={rise} exceeds canvas above deck_y={spec.deck_y}"
            )
    if spec.subtype is Subtype.TOP_BEARING_ARCH and spec.deck_y + rise > h - 1:
        raise ValidationError(
            f"tower_or_arch_rise_px={rise} exceeds canvas below deck_y={spec.deck_y}"
        )


def render(spec: BridgeSpec) -> RasterImage:
    _validate(spec)
    canvas = _Canvas(spec.width, spec.height)
    t = spec.member_thickness_px
    bottom = spec.height - 1
    deck = spec.deck_y
    rise = spec.tower_or_arch_rise_px
    scale = spec.px_per_m
    pier = round(MARGIN_PX + spec.span_m[0] * scale)
    pier_right = spec.width - 1 - pier
    centre = (spec.width - 1) // 2

    # deck
    canvas.rows(deck, deck + t)
    below = deck + t + 1

    subtype = spec.subtype
    if subtype is Subtype.EQUAL_SECTION_BEAM:
        canvas.column(pier, below, bottom, t + 1)
    elif subtype is Subtype.V_PIER_RIGID_FRAME:
        canvas.line(pier - rise, below, pier, bottom, t)
        canvas.line(pier + rise, below, pier, bottom, t)
    elif subtype is Subtype.TOP_BEARING_ARCH:
        spring = deck + rise
        canvas.column(pier, below, bottom, t + 1)
        canvas.parabola(pier, pier_right, spring, below, t)
        for x in _stations(pier, centre, spec.cable_count):
            canvas.column(x, below, _parabola_y(x, pier, pier_right, spring, below))
    elif subtype is Subtype.BOTTOM_BEARING_ARCH:
        crown = deck - rise
        canvas.column(pier, below, bottom, t + 1)
        canvas.parabola(pier, pier_right, deck, crown, t)
        for x in _stations(pier, centre, spec.cable_count):
            canvas.column(x, _parabola_y(x, pier, pier_right, deck, crown), deck)
    elif spec.family is Family.CABLE_STAYED:
        top = deck - rise
        canvas.column(pier, top, bottom, t + 1)
        _stays(canvas, spec, pier, top, centre)
    elif spec.family is Family.SUSPENSION:
        top = deck - rise
        sag = deck - 2
        canvas.column(pier, top, bottom, t + 1)
        canvas.parabola(pier, pier_right, top, sag, 1)
        canvas.line(pier, top, MARGIN_PX, deck)
        stations = list(_stations(pier, centre, spec.cable_count))
        step = (stations[1] - stations[0]) if len(stations) > 1 else 2
        for x in stations:
            cable = _parabola_y(x, pier, pier_right, top, sag)
            if subtype is Subtype.VERTICAL_SLING_SUSPENSION:
                canvas.column(x, cable, deck)
            else:
                canvas.line(x, cable, min(x + step // 2, centre), deck)
    return canvas.mirrored()


def _stations(start: int, centre: int, count: int):
    """``count`` evenly spaced columns strictly between start and centre."""
    for k in range(1, count + 1):
        yield round(start + k * (centre - start) / (count + 1))


def _stays(canvas: _Canvas, spec: BridgeSpec, pier: int, top: int, centre: int):
    n = spec.cable_count
    deck = spec.deck_y
    reaches = (
        round((pier - MARGIN_PX) * 0.9),  # towards the abutment
        round((centre - pier) * 0.9),  # towards midspan
    )
    for direction, reach in zip((-1, 1), reaches):
        for k in range(1, n + 1):
            anchor = pier + direction * round(k * reach / n)
            if spec.subtype is Subtype.HARP_CABLE_STAYED:
                attach = deck - round(k * (deck - top - 1) / n)
            else:
                attach = top + 1
            canvas.line(pier, attach, anchor, deck)


def build_dataset(
    out_dir,
    per_subtype: int = 1200,
    master_seed: int = 42,
    width: int = 192,
    height: int = 48,
    workers: int = 1,
) -> DatasetManifest:
    """Render ``per_subtype`` variants of each subtype as PGM files plus a manifest."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as ex:
        raise StorageError(os.fspath(out_dir), ex.strerror or str(ex)) from ex

    jobs = [(subtype, i) for subtype in Subtype for i in range(per_subtype)]

    def produce(job):
        subtype, i = job
        spec = generate_spec(subtype, i, master_seed, per_subtype, width, height)
        filename = f"{subtype.value}_{i:04d}.pgm"
        write_pgm(out_dir / filename, render(spec))
        return ManifestRecord(file=filename, subtype=subtype, seed=spec.seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(produce, jobs))
    else:
        records = [produce(job) for job in jobs]

    manifest = DatasetManifest(records=records)
    write_manifest(out_dir, manifest)
    for subtype, count in manifest.counts.items():
        logger.info("rendered %d images of %s", count, subtype)
    return manifest


def write_manifest(out_dir, manifest: DatasetManifest):
    path = Path(out_dir) / MANIFEST_FILE
    payload = ManifestRecordSchema(many=True).dump(manifest.records)
    try:
        path.write_text(json.dumps(payload, indent=2) + "\n")
    except OSError as ex:
        raise StorageError(os.fspath(path), ex.strerror or str(ex)) from ex


def read_manifest(data_dir) -> DatasetManifest:
    path = Path(data_dir) / MANIFEST_FILE
    try:
        payload = json.loads(path.read_text())
    except OSError as ex:
        raise StorageError(os.fspath(path), ex.strerror or str(ex)) from ex
    except json.JSONDecodeError as ex:
        raise FormatError(f"{path}: {ex}") from ex
    try:
        records = ManifestRecordSchema(many=True).load(payload)
    except SchemaError as ex:
        raise FormatError(f"{path}: {ex.messages}") from ex
    return DatasetManifest(records=records)


def load_images(
    data_dir,
    manifest: DatasetManifest = None,
    crop: typing.Optional[tuple] = None,
    crop_origin: typing.Optional[tuple] = None,
    max_images: typing.Optional[int] = None,
) -> np.ndarray:
    """Images of a dataset directory as a uint8 (N, H, W) array in manifest order.

    ``crop`` keeps a (height, width) window of each image whose top-left corner
    is ``crop_origin`` (row, col), by default the image corner.
    """
    manifest = manifest or read_manifest(data_dir)
    records = manifest.records[:max_images] if max_images else manifest.records
    images = []
    for record in records:
        pixels = read_pgm(Path(data_dir) / record.file).pixels
        if crop:
            rows, cols = crop
            y0, x0 = crop_origin or (0, 0)
            height, width = pixels.shape
            if min(y0, x0) < 0 or y0 + rows > height or x0 + cols > width:
                raise ValidationError(
                    f"crop {rows}x{cols} at ({y0}, {x0}) outside image {height}x{width}"
                )
            pixels = pixels[y0 : y0 + rows, x0 : x0 + cols]
        if images and pixels.shape != images[0].shape:
            raise ValidationError(
                f"{record.file}: dims {pixels.shape} differ from {images[0].shape}"
            )
        images.append(pixels)
    if not images:
        raise ValidationError(f"no images found in {data_dir}")
    return np.stack(images)
