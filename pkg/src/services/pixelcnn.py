"""Masked-convolution PixelCNN.

Layer stack: type-A masked input convolution, ``num_resnet`` residual blocks
with type-B 3x3 masked convolutions, two 1x1 convolutions and a 1x1 head
projection. Pixels are ordered in raster order; the head output at a pixel
never depends on that pixel or any pixel after it.
"""
import logging
import math
import typing

import numpy as np

from src.models.likelihood import NllReport
from src.models.pixelcnn import (
    MIN_LOG_SCALE,
    HeadKind,
    MaskKind,
    ModelConfig,
    PixelDistribution,
)
from src.numerics import (
    ParamSet,
    Tensor,
    add,
    clamp_min,
    conv2d_same,
    mul,
    relu,
    scale,
    take_channels,
)
from src.services.likelihood import head_nll
from src.utils.errors import ValidationError

__all__ = (
    "build_mask",
    "visible_taps",
    "masked_conv",
    "residual_block",
    "init_params",
    "check_dims",
    "forward",
    "receptive_field",
    "scale_images",
    "PixelCNN",
)

logger = logging.getLogger(__name__)

# mixture means and scales are expressed around the middle of 0..255
_HALF_RANGE = 127.5


def build_mask(kh: int, kw: int, kind) -> np.ndarray:
    """Binary (kh, kw) mask hiding every tap after the centre in raster order.

    Type A also hides the centre tap.
    """
    kind = MaskKind(kind)
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValidationError(f"mask dims must be odd, got kh={kh}, kw={kw}")
    cr, cc = kh // 2, kw // 2
    mask = np.zeros((kh, kw), dtype=np.float32)
    mask[:cr, :] = 1
    mask[cr, :cc] = 1
    if kind is MaskKind.B:
        mask[cr, cc] = 1
    return mask


def visible_taps(mask: np.ndarray) -> list:
    return [tuple(tap) for tap in np.argwhere(mask > 0).tolist()]


def masked_conv(input: Tensor, weights: Tensor, bias: Tensor, kind) -> Tensor:
    """``conv2d_same`` with the kernel multiplied by its mask.

    Masked-out taps are skipped entirely, so their weights get exact zero
    gradients and the pixels they would read never enter the arithmetic.
    """
    kh, kw = weights.shape[:2]
    mask = build_mask(kh, kw, kind)
    full = np.broadcast_to(mask[:, :, None, None], weights.shape)
    masked = mul(weights, Tensor(full, dtype=weights.dtype))
    return conv2d_same(input, masked, bias, taps=visible_taps(mask))


def _pointwise(input: Tensor, params: ParamSet, prefix: str) -> Tensor:
    return masked_conv(
        input, params[f"{prefix}.kernel"], params[f"{prefix}.bias"], MaskKind.B
    )


def residual_block(input: Tensor, params: ParamSet, prefix: str = "block0") -> Tensor:
    """``input`` plus a halve, masked 3x3, restore branch."""
    filters = input.shape[-1]
    if filters % 2:
        raise ValidationError(f"residual block needs an even channel count, got {filters}")
    h = relu(_pointwise(input, params, f"{prefix}.reduce"))
    h = relu(
        masked_conv(
            h,
            params[f"{prefix}.masked.kernel"],
            params[f"{prefix}.masked.bias"],
            MaskKind.B,
        )
    )
    h = _pointwise(h, params, f"{prefix}.restore")
    return add(input, h)


def _param_layout(config: ModelConfig) -> dict:
    """name -> (kernel shape, mask kind) of every convolution."""
    f, half = config.num_filters, config.num_filters // 2
    kh, kw = config.input_kernel
    layout = {"input": ((kh, kw, config.channels, f), MaskKind.A)}
    for i in range(config.num_resnet):
        layout[f"block{i}.reduce"] = ((1, 1, f, half), MaskKind.B)
        layout[f"block{i}.masked"] = ((3, 3, half, half), MaskKind.B)
        layout[f"block{i}.restore"] = ((1, 1, half, f), MaskKind.B)
    layout["hidden0"] = ((1, 1, f, f), MaskKind.B)
    layout["hidden1"] = ((1, 1, f, f), MaskKind.B)
    layout["head"] = ((1, 1, f, config.head.channels), MaskKind.B)
    return layout


def init_params(config: ModelConfig, rng_seed: int = 0, zero_head: bool = True) -> ParamSet:
    """Uniform +-sqrt(6 / fan_in) weights on visible taps, zero biases.

    With ``zero_head`` the final projection starts at zero, so an untrained
    categorical head is uniform.
    """
    rng = np.random.default_rng(rng_seed)
    tensors = {}
    for layer, (shape, kind) in sorted(_param_layout(config).items()):
        mask = build_mask(shape[0], shape[1], kind)
        fan_in = mask.sum() * shape[2]
        bound = math.sqrt(6.0 / fan_in)
        kernel = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        if layer == "head" and zero_head:
            kernel[...] = 0
        tensors[f"{layer}.kernel"] = kernel * mask[:, :, None, None]
        tensors[f"{layer}.bias"] = np.zeros(shape[-1], dtype=np.float32)
    return ParamSet(tensors)


def receptive_field(config: ModelConfig) -> tuple:
    """(rows above, cols on each side) of input that can reach a head output."""
    rows, cols = config.receptive_field
    return rows - 1 + config.num_resnet, (cols - 1) // 2 + config.num_resnet


def scale_images(images, dtype=np.float32) -> Tensor:
    """uint8 (N, H, W[, 1]) -> (N, H, W, 1) tensor in [0, 1]."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[..., None]
    return Tensor(images.astype(dtype) / dtype(255.0), dtype=dtype)


def _dropout(x: Tensor, p: float, rng) -> Tensor:
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(keep, dtype=x.dtype))


def _split_head(raw: Tensor, config: ModelConfig) -> PixelDistribution:
    head = config.head
    if head.kind is HeadKind.CATEGORICAL:
        return PixelDistribution(head=head, logits=raw)
    m = head.num_components
    offset = Tensor(np.full(m, _HALF_RANGE), dtype=raw.dtype)
    log_offset = Tensor(np.full(m, math.log(_HALF_RANGE)), dtype=raw.dtype)
    means = add(scale(take_channels(raw, m, 2 * m), _HALF_RANGE), offset)
    log_scales = clamp_min(add(take_channels(raw, 2 * m, 3 * m), log_offset), MIN_LOG_SCALE)
    return PixelDistribution(
        head=head,
        mixture_logits=take_channels(raw, 0, m),
        means=means,
        log_scales=log_scales,
    )


def check_dims(config: ModelConfig, height: int, width: int):
    if (height, width) != (config.image_h, config.image_w):
        raise ValidationError(
            f"image dims {height}x{width} do not match model "
            f"{config.image_h}x{config.image_w}"
        )


def forward(
    images: Tensor,
    config: ModelConfig,
    params: ParamSet,
    training: bool = False,
    rng: typing.Optional[np.random.Generator] = None,
    allow_crop: bool = False,
) -> PixelDistribution:
    """Head parameters at every pixel for images scaled to [0, 1].

    Dropout after each residual block is applied only when ``training``.
    With ``allow_crop`` the spatial dims may be smaller than the configured
    image, for callers that evaluate the window above a pixel.
    """
    if images.data.ndim != 4 or images.shape[-1] != config.channels:
        raise ValidationError(
            f"images must be (N, H, W, {config.channels}), got {images.shape}"
        )
    height, width = images.shape[1:3]
    if allow_crop:
        if height > config.image_h or width > config.image_w:
            raise ValidationError(
                f"crop {height}x{width} exceeds model {config.image_h}x{config.image_w}"
            )
    else:
        check_dims(config, height, width)
    if training and rng is None:
        raise ValidationError("training forward pass needs an rng for dropout")

    h = relu(masked_conv(images, params["input.kernel"], params["input.bias"], MaskKind.A))
    for i in range(config.num_resnet):
        h = residual_block(h, params, f"block{i}")
        if training and config.dropout_p > 0:
            h = _dropout(h, config.dropout_p, rng)
    h = relu(_pointwise(h, params, "hidden0"))
    h = relu(_pointwise(h, params, "hidden1"))
    return _split_head(_pointwise(h, params, "head"), config)


class PixelCNN:
    """A configured model bound to its parameters."""

    def __init__(self, config: ModelConfig, params: ParamSet = None, rng_seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, rng_seed)

    def check_dims(self, height: int, width: int):
        check_dims(self.config, height, width)

    def forward(
        self, images: Tensor, training=False, rng=None, allow_crop=False
    ) -> PixelDistribution:
        return forward(
            images, self.config, self.params, training=training, rng=rng, allow_crop=allow_crop
        )

    def distribution(self, images) -> PixelDistribution:
        """Evaluation-mode head parameters for uint8 images."""
        images = np.asarray(images)
        dtype = next(iter(self.params.values())).dtype
        return self.forward(scale_images(images, dtype=dtype.type))

    def nll(self, images, batch_size: int = 16) -> NllReport:
        """NLL of uint8 (N, H, W) images, evaluated in batches."""
        report = NllReport(total_nats=0.0, pixel_count=0)
        for start in range(0, len(images), batch_size):
            batch = np.asarray(images[start : start + batch_size])
            report = report + head_nll(self.distribution(batch), batch)
        return report
