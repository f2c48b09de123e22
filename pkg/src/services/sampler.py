"""Pixel-by-pixel generation.

Each image is produced by a strictly sequential raster-order loop. In fast
mode the head at a pixel is computed on the smallest crop holding its whole
dependency cone; because every kernel is evaluated per pixel with the same
operation order, the result is bit-identical to a full forward pass.
"""
import hashlib
import json
import logging
import os
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.models.bridge import RasterImage
from src.models.sampling import SampleConfig
from src.schemas.serializers.reports import RunManifestSchema
from src.services import checkpoint as checkpoint_io
from src.services.dataset import load_images
from src.services.likelihood import sample_pixel
from src.services.pgm import read_pgm, write_pgm
from src.services.pixelcnn import PixelCNN, receptive_field, scale_images
from src.utils.errors import StaleCacheError, StorageError, ValidationError

__all__ = (
    "FastForwardCache",
    "fast_forward_at",
    "full_forward_at",
    "sample_image",
    "nearest_l1",
    "generate",
    "RUN_MANIFEST_FILE",
)

logger = logging.getLogger(__name__)

RUN_MANIFEST_FILE = "run.json"


def _digest(pixels: np.ndarray) -> bytes:
    return hashlib.blake2b(pixels.tobytes(), digest_size=16).digest()


@dataclass
class FastForwardCache:
    """Tracks the canvas prefix the sampler has already committed to."""

    index: int = 0
    digest: bytes = field(default_factory=lambda: _digest(np.zeros(0, np.uint8)))

    def verify(self, flat: np.ndarray, pixel_index: int):
        if pixel_index < self.index:
            raise StaleCacheError(
                f"pixel {pixel_index} precedes cached position {self.index}"
            )
        if _digest(flat[: self.index]) != self.digest:
            raise StaleCacheError(
                f"canvas prefix of {self.index} pixels changed since last call"
            )

    def advance(self, flat: np.ndarray, pixel_index: int):
        self.index = pixel_index
        self.digest = _digest(flat[:pixel_index])


def full_forward_at(model: PixelCNN, canvas: np.ndarray, pixel_index: int) -> tuple:
    """Head parameters at one pixel from a forward pass over the whole canvas."""
    y, x = divmod(pixel_index, canvas.shape[1])
    return model.forward(scale_images(canvas[None])).pixel(0, y, x)


def fast_forward_at(
    model: PixelCNN, canvas: np.ndarray, pixel_index: int, cache: FastForwardCache
) -> tuple:
    """Head parameters at one pixel, computed on its dependency cone only."""
    height, width = canvas.shape
    if not 0 <= pixel_index < height * width:
        raise ValidationError(f"pixel_index={pixel_index} outside {height}x{width} canvas")
    flat = canvas.reshape(-1)
    cache.verify(flat, pixel_index)

    up, side = receptive_field(model.config)
    y, x = divmod(pixel_index, width)
    y0, x0 = max(0, y - up), max(0, x - side)
    x1 = min(width, x + side + 1)
    crop = canvas[y0 : y + 1, x0:x1]
    dist = model.forward(scale_images(crop[None]), allow_crop=True)
    params = dist.pixel(0, y - y0, x - x0)

    cache.advance(flat, pixel_index)
    return params


def sample_image(
    model: PixelCNN,
    config: SampleConfig,
    rng: np.random.Generator,
    seed_image: typing.Optional[RasterImage] = None,
) -> RasterImage:
    """Generate one image in raster order; rows inside the seed region are kept."""
    height, width = model.config.image_h, model.config.image_w
    canvas = np.zeros((height, width), dtype=np.uint8)
    seed_rows = config.seed_rows
    if seed_rows > height:
        raise ValidationError(f"seed_rows={seed_rows} exceeds image height {height}")
    if seed_rows:
        if seed_image is None:
            raise ValidationError("seed_rows given without a seed image")
        model.check_dims(seed_image.height, seed_image.width)
        canvas[:seed_rows] = seed_image.pixels[:seed_rows]

    head = model.config.head
    cache = FastForwardCache()
    for index in range(seed_rows * width, height * width):
        if config.fast_mode:
            params = fast_forward_at(model, canvas, index, cache)
        else:
            params = full_forward_at(model, canvas, index)
        y, x = divmod(index, width)
        canvas[y, x] = sample_pixel(head, params, config.temperature, rng)
        if x == width - 1:
            logger.debug("generated row %d/%d", y + 1, height)
    return RasterImage(canvas)


def nearest_l1(image: RasterImage, train_images: np.ndarray) -> float:
    """Smallest mean absolute pixel difference to any training image."""
    sample = image.pixels.astype(np.int16)
    best = np.inf
    for start in range(0, len(train_images), 256):
        chunk = train_images[start : start + 256].astype(np.int16)
        distances = np.abs(chunk - sample).mean(axis=(1, 2))
        best = min(best, float(distances.min()))
    return best


def _sample_seed(rng_seed: int, checkpoint_index: int, index: int) -> int:
    sequence = np.random.SeedSequence([rng_seed, checkpoint_index, index])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def generate(
    config: SampleConfig,
    train_dir: typing.Optional[str] = None,
    workers: int = 1,
) -> dict:
    """Sample ``config.count`` images per checkpoint into ``config.out_dir``.

    Writes the PGM files and a run manifest, which is also returned.
    """
    checkpoints = config.checkpoints
    if not checkpoints:
        raise ValidationError("no checkpoint to sample from")
    out_dir = Path(config.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as ex:
        raise StorageError(os.fspath(out_dir), ex.strerror or str(ex)) from ex
    seed_image = read_pgm(config.seed_image) if config.seed_image else None

    train_images = None
    if train_dir:
        train_images = load_images(train_dir)

    manifest = {
        "checkpoint": list(checkpoints),
        "temperature": config.temperature,
        "fast_mode": config.fast_mode,
        "requested": config.count * len(checkpoints),
        "seeds": [],
        "files": [],
        "checkpoints": [],
        "nearest_train_l1": [],
        "asymmetry": [],
    }
    for k, path in enumerate(checkpoints):
        checkpoint = checkpoint_io.load(path)
        model = PixelCNN(checkpoint.config, checkpoint.params)
        seeds = [_sample_seed(config.rng_seed, k, i) for i in range(config.count)]

        def produce(seed):
            return sample_image(model, config, np.random.default_rng(seed), seed_image)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                images = list(pool.map(produce, seeds))
        else:
            images = [produce(seed) for seed in seeds]

        for i, (seed, image) in enumerate(zip(seeds, images)):
            prefix = "sample" if len(checkpoints) == 1 else f"sample_{k}"
            filename = f"{prefix}_{i:04d}.pgm"
            write_pgm(out_dir / filename, image)
            nearest = None
            if train_images is not None and train_images.shape[1:] == image.pixels.shape:
                nearest = nearest_l1(image, train_images)
            manifest["seeds"].append(seed)
            manifest["files"].append(filename)
            manifest["checkpoints"].append(path)
            manifest["nearest_train_l1"].append(nearest)
            manifest["asymmetry"].append(image.asymmetry())
            logger.info("wrote %s (seed %d)", filename, seed)

    payload = RunManifestSchema().dump(manifest)
    target = out_dir / RUN_MANIFEST_FILE
    try:
        target.write_text(json.dumps(payload, indent=2) + "\n")
    except OSError as ex:
        raise StorageError(os.fspath(target), ex.strerror or str(ex)) from ex
    return payload
