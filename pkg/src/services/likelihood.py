"""Pixel likelihoods: categorical head with interval binning and the
discretized logistic mixture (DLM) head, plus per-pixel sampling."""
import numpy as np

from src.models.likelihood import NllReport, QuantizerConfig
from src.models.pixelcnn import (
    MIN_LOG_SCALE,
    HeadKind,
    PixelDistribution,
)
from src.numerics import Tensor, record_op
from src.numerics.ops import log_softmax, logsumexp, sigmoid, softmax, softplus
from src.utils.errors import ValidationError

__all__ = (
    "quantize",
    "dequantize",
    "categorical_nll",
    "categorical_nll_loss",
    "dlm_log_pmf",
    "dlm_pmf",
    "mixture_nll",
    "mixture_nll_loss",
    "head_nll_loss",
    "head_nll",
    "pixel_pmf",
    "sample_pixel",
)

PIXEL_VALUES = 256


def _bin_edges(cfg: QuantizerConfig) -> np.ndarray:
    """Inclusive lower edge of each bin, plus 256 as the closing edge."""
    k = cfg.num_bins
    return -((-np.arange(k + 1) * PIXEL_VALUES) // k)


def quantize(v, cfg: QuantizerConfig):
    values = np.asarray(v)
    if values.size and (values.min() < 0 or values.max() > 255):
        raise ValidationError(f"pixel value out of range 0..255: {v}")
    bins = (values.astype(np.int64) * cfg.num_bins) // PIXEL_VALUES
    return int(bins) if bins.ndim == 0 else bins


def dequantize(b, cfg: QuantizerConfig):
    """Rounded midpoint of each bin."""
    bins = np.asarray(b)
    if bins.size and (bins.min() < 0 or bins.max() >= cfg.num_bins):
        raise ValidationError(f"bin index out of range 0..{cfg.num_bins - 1}: {b}")
    edges = _bin_edges(cfg)
    values = (edges[bins] + edges[bins + 1]) // 2
    return int(values) if values.ndim == 0 else values


def categorical_nll_loss(logits: Tensor, targets) -> Tensor:
    """Summed ``-log softmax(logits)[target]`` as a recorded scalar."""
    targets = np.asarray(targets, dtype=np.int64)
    k = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ValidationError(
            f"targets shape {targets.shape} != logits shape {logits.shape[:-1]}"
        )
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise ValidationError(f"target out of range 0..{k - 1}")
    data = logits.data.astype(np.float64)
    log_probs = log_softmax(data)
    picked = np.take_along_axis(log_probs, targets[..., None], axis=-1)
    out = Tensor(np.array(-picked.sum(), dtype=np.float64))

    def adjoint(grad):
        probs = np.exp(log_probs)
        np.put_along_axis(
            probs,
            targets[..., None],
            np.take_along_axis(probs, targets[..., None], axis=-1) - 1.0,
            axis=-1,
        )
        return (grad * probs,)

    return record_op("categorical_nll", (logits,), out, adjoint)


def categorical_nll(logits: Tensor, targets) -> NllReport:
    loss = categorical_nll_loss(logits, targets)
    return NllReport(total_nats=loss.item(), pixel_count=int(np.size(targets)))


def _dlm_terms(mu, log_s, v):
    """Log-pmf of the discretized logistic and its partials in mu and log_s."""
    mu = np.asarray(mu, dtype=np.float64)
    raw = np.asarray(log_s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    log_s = np.maximum(raw, MIN_LOG_SCALE)
    inv = np.exp(-log_s)
    a = (v + 0.5 - mu) * inv
    b = (v - 0.5 - mu) * inv
    sig_neg_a, sig_b = sigmoid(-a), sigmoid(b)

    # interior bins: log(sigmoid(a) - sigmoid(b)), a - b = 1/s
    log_p = -softplus(-a) - softplus(b) + np.log(-np.expm1(-inv))
    d_mu = -inv * (sig_neg_a - sig_b)
    d_log_s = -a * sig_neg_a + b * sig_b - inv / np.expm1(inv)

    low, high = v <= 0, v >= PIXEL_VALUES - 1
    log_p = np.where(low, -softplus(-a), np.where(high, -softplus(b), log_p))
    d_mu = np.where(low, -inv * sig_neg_a, np.where(high, inv * sig_b, d_mu))
    d_log_s = np.where(low, -a * sig_neg_a, np.where(high, b * sig_b, d_log_s))
    d_log_s = d_log_s * (raw > MIN_LOG_SCALE)
    return log_p, d_mu, d_log_s


def dlm_log_pmf(mu, log_s, v):
    return _dlm_terms(mu, log_s, v)[0]


def dlm_pmf(mu, log_s, v):
    """Probability of integer pixel value ``v`` under a discretized logistic."""
    return np.exp(dlm_log_pmf(mu, log_s, v))


def mixture_nll_loss(
    mixture_logits: Tensor, means: Tensor, log_scales: Tensor, targets
) -> Tensor:
    targets = np.asarray(targets)
    if targets.shape != means.shape[:-1]:
        raise ValidationError(
            f"targets shape {targets.shape} != head shape {means.shape[:-1]}"
        )
    log_p, d_mu, d_log_s = _dlm_terms(
        means.data, log_scales.data, targets[..., None]
    )
    log_w = log_softmax(mixture_logits.data.astype(np.float64))
    joint = log_w + log_p
    log_total = logsumexp(joint, axis=-1, keepdims=True)
    out = Tensor(np.array(-log_total.sum(), dtype=np.float64))

    def adjoint(grad):
        responsibility = np.exp(joint - log_total)
        return (
            grad * (np.exp(log_w) - responsibility),
            grad * -responsibility * d_mu,
            grad * -responsibility * d_log_s,
        )

    return record_op(
        "mixture_nll", (mixture_logits, means, log_scales), out, adjoint
    )


def mixture_nll(dist: PixelDistribution, targets) -> NllReport:
    loss = mixture_nll_loss(dist.mixture_logits, dist.means, dist.log_scales, targets)
    return NllReport(total_nats=loss.item(), pixel_count=int(np.size(targets)))


def head_nll_loss(dist: PixelDistribution, images) -> Tensor:
    """Total NLL in nats of uint8 ``images`` (N, H, W) under ``dist``."""
    images = np.asarray(images)
    if dist.head.kind is HeadKind.CATEGORICAL:
        targets = quantize(images, QuantizerConfig(dist.head.num_categories))
        return categorical_nll_loss(dist.logits, targets)
    return mixture_nll_loss(dist.mixture_logits, dist.means, dist.log_scales, images)


def head_nll(dist: PixelDistribution, images) -> NllReport:
    loss = head_nll_loss(dist, images)
    return NllReport(total_nats=loss.item(), pixel_count=int(np.size(images)))


def _mixture_log_pmf(mixture_logits, means, log_scales) -> np.ndarray:
    values = np.arange(PIXEL_VALUES, dtype=np.float64)[:, None]
    log_w = log_softmax(np.asarray(mixture_logits, dtype=np.float64))
    return logsumexp(log_w + dlm_log_pmf(means, log_scales, values), axis=-1)


def pixel_pmf(head, params: tuple) -> np.ndarray:
    """256-entry pmf over pixel values for one pixel's head parameters."""
    if head.kind is HeadKind.CATEGORICAL:
        (logits,) = params
        cfg = QuantizerConfig(head.num_categories)
        pmf = np.zeros(PIXEL_VALUES)
        np.add.at(pmf, dequantize(np.arange(cfg.num_bins), cfg), softmax(logits))
        return pmf
    return np.exp(_mixture_log_pmf(*params))


def _draw(log_weights: np.ndarray, temperature: float, rng) -> int:
    if temperature == 0:
        return int(np.argmax(log_weights))
    probs = softmax(log_weights / temperature)
    cumulative = np.cumsum(probs)
    index = np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right")
    return int(min(index, len(probs) - 1))


def sample_pixel(head, params: tuple, temperature: float, rng) -> int:
    """Draw one pixel value; ``temperature=0`` picks the lowest most likely value."""
    if temperature < 0:
        raise ValidationError(f"temperature={temperature} must be >= 0")
    if head.kind is HeadKind.CATEGORICAL:
        (logits,) = params
        index = _draw(np.asarray(logits, dtype=np.float64), temperature, rng)
        return dequantize(index, QuantizerConfig(head.num_categories))
    # tempering pmf ** (1 / t) is a division of the log-pmf
    return _draw(_mixture_log_pmf(*params), temperature, rng)
