import csv
import logging
import math
import os
import typing
from pathlib import Path

import numpy as np

from src.models.likelihood import NllReport
from src.models.training import AdamState, Checkpoint, MetricRow, TrainConfig
from src.numerics import ComputationRecord, ParamSet, backward, scale
from src.services import checkpoint as checkpoint_io
from src.services.dataset import load_images, read_manifest
from src.services.likelihood import head_nll_loss
from src.services.pixelcnn import PixelCNN, forward, init_params, scale_images
from src.utils.errors import StorageError, TrainingDivergedError, ValidationError

__all__ = ("adam_step", "train", "eval_nll", "MetricLog")

logger = logging.getLogger(__name__)


def adam_step(
    params: ParamSet, grads: dict, moments: AdamState, step: int, cfg: TrainConfig
) -> tuple:
    """Bias-corrected Adam update; ``step`` counts from 1.

    Returns the updated parameters and moments; inputs are left untouched.
    """
    lr, b1, b2, eps = cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps
    updated, m_out, v_out = {}, {}, {}
    for name in params:
        theta = params[name].data
        grad = np.asarray(grads.get(name, np.zeros_like(theta)), dtype=np.float64)
        if grad.shape != theta.shape:
            raise ValidationError(
                f"gradient shape {grad.shape} != parameter {name!r} shape {theta.shape}"
            )
        m = b1 * moments.m.get(name, np.zeros_like(theta)) + (1 - b1) * grad
        v = b2 * moments.v.get(name, np.zeros_like(theta)) + (1 - b2) * grad**2
        m_hat = m / (1 - b1**step)
        v_hat = v / (1 - b2**step)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        updated[name] = theta.astype(params[name].dtype)
        m_out[name] = m.astype(params[name].dtype)
        v_out[name] = v.astype(params[name].dtype)
    return ParamSet(updated), AdamState(m=m_out, v=v_out)


class MetricLog:
    """Append-only CSV of (step, epoch, split, bits_per_dim)."""

    columns = ("step", "epoch", "split", "bits_per_dim")

    def __init__(self, path: typing.Optional[str] = None):
        self.path = path
        self.rows = []

    def append(self, row: MetricRow):
        self.rows.append(row)
        if self.path is None:
            return
        try:
            fresh = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
            with open(self.path, "a", newline="") as f:
                writer = csv.writer(f)
                if fresh:
                    writer.writerow(self.columns)
                writer.writerow((row.step, row.epoch, row.split, repr(row.bits_per_dim)))
        except OSError as ex:
            raise StorageError(self.path, ex.strerror or str(ex)) from ex


def _bits_per_dim_loss(dist, batch):
    nats = head_nll_loss(dist, batch)
    return scale(nats, 1.0 / (batch.size * math.log(2)))


def train(
    config: TrainConfig,
    images: typing.Optional[np.ndarray] = None,
    resume: typing.Optional[Checkpoint] = None,
) -> tuple:
    """Fit the model by minimizing mean bits/dim over every pixel of every image.

    Returns the final :class:`Checkpoint` and the metric rows written.
    """
    model_cfg = config.model
    if images is None:
        images = load_images(
            config.data_dir,
            crop=config.crop,
            crop_origin=config.crop_origin,
            max_images=config.max_images,
        )
    images = np.asarray(images, dtype=np.uint8)
    if images.shape[1:3] != (model_cfg.image_h, model_cfg.image_w):
        raise ValidationError(
            f"image dims {images.shape[1]}x{images.shape[2]} do not match model "
            f"{model_cfg.image_h}x{model_cfg.image_w}"
        )

    if resume is not None:
        checkpoint_io.check_config(resume.config, model_cfg)
        params, moments, step = resume.params, resume.moments, resume.step
        dropout_rng = np.random.default_rng()
        dropout_rng.bit_generator.state = resume.rng_state
    else:
        params, moments, step = init_params(model_cfg, config.rng_seed), AdamState(), 0
        dropout_rng = np.random.default_rng([config.rng_seed, 1])

    n = len(images)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total = config.epochs * steps_per_epoch
    if config.max_steps is not None:
        total = min(total, config.max_steps)
    log = MetricLog(config.metrics_path)
    if config.checkpoint_dir:
        Path(config.checkpoint_dir).mkdir(parents=True, exist_ok=True)

    last_finite = math.nan
    while step < total:
        epoch, position = divmod(step, steps_per_epoch)
        order = np.random.default_rng([config.rng_seed, 0, epoch]).permutation(n)
        batch = images[order[position * config.batch_size : (position + 1) * config.batch_size]]

        with ComputationRecord() as record:
            dist = forward(scale_images(batch), model_cfg, params, training=True, rng=dropout_rng)
            loss = _bits_per_dim_loss(dist, batch)
        bits = loss.item()
        if not math.isfinite(bits):
            raise TrainingDivergedError(step + 1, last_finite)
        last_finite = bits

        grads = backward(loss, record, params)
        params, moments = adam_step(params, grads, moments, step + 1, config)
        step += 1
        log.append(MetricRow(step=step, epoch=epoch, split="train", bits_per_dim=bits))
        logger.info("step %d epoch %d: %.6f bits/dim", step, epoch, bits)

        state = Checkpoint(model_cfg, params, moments, step, dropout_rng.bit_generator.state)
        if config.checkpoint_every and config.checkpoint_dir and step % config.checkpoint_every == 0:
            checkpoint_io.save(Path(config.checkpoint_dir) / f"step_{step:06d}.ckpt", state)

    final = Checkpoint(model_cfg, params, moments, step, dropout_rng.bit_generator.state)
    if config.checkpoint_dir:
        checkpoint_io.save(Path(config.checkpoint_dir) / "last.ckpt", final)

    report = PixelCNN(model_cfg, params).nll(images, batch_size=config.batch_size)
    epoch = max(step - 1, 0) // steps_per_epoch
    log.append(MetricRow(step=step, epoch=epoch, split="eval", bits_per_dim=report.bits_per_dim))
    logger.info("final eval: %.6f bits/dim", report.bits_per_dim)
    return final, log.rows


def eval_nll(
    checkpoint: typing.Union[Checkpoint, str],
    data_dir,
    batch_size: int = 16,
    crop: typing.Optional[tuple] = None,
    crop_origin: typing.Optional[tuple] = None,
) -> dict:
    """Evaluation-mode NLL, overall and grouped by manifest subtype.

    Returns a mapping with key ``"overall"`` plus one key per subtype.
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = checkpoint_io.load(checkpoint)
    model = PixelCNN(checkpoint.config, checkpoint.params)
    manifest = read_manifest(data_dir)
    images = load_images(data_dir, manifest, crop=crop, crop_origin=crop_origin)
    model.check_dims(*images.shape[1:3])

    subtypes = np.array([record.subtype.value for record in manifest.records])
    reports = {"overall": NllReport(total_nats=0.0, pixel_count=0)}
    for subtype in dict.fromkeys(subtypes):
        report = model.nll(images[subtypes == subtype], batch_size=batch_size)
        reports[subtype] = report
        reports["overall"] = reports["overall"] + report
    return reports
