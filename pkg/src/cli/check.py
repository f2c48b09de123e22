"""Invariant suite behind ``bridge-pixelcnn check``.

Every group runs on a reduced configuration so the suite finishes in
seconds; a failing group raises :class:`InvariantError`.
"""
import sys
import typing

import numpy as np

from src.models.bridge import RasterImage
from src.models.pixelcnn import CategoricalHead, LogisticMixtureHead, ModelConfig
from src.models.sampling import SampleConfig
from src.numerics import (
    ComputationRecord,
    ParamSet,
    Tensor,
    add,
    backward,
    conv2d_same,
    finite_diff_gradient,
    max_relative_error,
    mul,
    reduce_mean,
    reduce_sum,
    relu,
    scale,
)
from src.services import likelihood
from src.services.pgm import decode_pgm, encode_pgm
from src.services.pixelcnn import (
    PixelCNN,
    build_mask,
    forward,
    init_params,
    masked_conv,
    scale_images,
)
from src.services.sampler import sample_image
from src.utils.errors import InvariantError

INVARIANTS = {}


def invariant(name: str):
    def register(fn):
        INVARIANTS[name] = fn
        return fn

    return register


def _expect(condition: bool, message: str):
    if not condition:
        raise InvariantError(message)


@invariant("masks")
def check_masks(rng: np.random.Generator):
    _expect(
        np.array_equal(build_mask(3, 3, "A"), [[1, 1, 1], [1, 0, 0], [0, 0, 0]]),
        "3x3 type-A mask",
    )
    _expect(
        np.array_equal(build_mask(3, 3, "B"), [[1, 1, 1], [1, 1, 0], [0, 0, 0]]),
        "3x3 type-B mask",
    )
    for kh, kw in ((1, 1), (3, 5), (9, 7)):
        centre = np.zeros((kh, kw))
        centre[kh // 2, kw // 2] = 1
        _expect(
            np.array_equal(build_mask(kh, kw, "A") + centre, build_mask(kh, kw, "B")),
            f"mask algebra at {kh}x{kw}",
        )


@invariant("causality")
def check_causality(rng: np.random.Generator):
    config = ModelConfig(
        image_h=6,
        image_w=8,
        num_resnet=2,
        num_filters=8,
        receptive_field=(2, 3),
        head=CategoricalHead(4),
    )
    params = init_params(config, int(rng.integers(2**31)), zero_head=False)
    images = rng.integers(0, 256, size=(1, 6, 8), dtype=np.uint8)
    base = forward(scale_images(images), config, params).stacked()[0]
    for j in range(6 * 8):
        perturbed = images.copy()
        perturbed.reshape(-1)[j] ^= 0xFF
        out = forward(scale_images(perturbed), config, params).stacked()[0]
        prefix = out.reshape(6 * 8, -1)[: j + 1]
        _expect(
            prefix.tobytes() == base.reshape(6 * 8, -1)[: j + 1].tobytes(),
            f"head before pixel {j} changed when pixel {j} was perturbed",
        )


def _op_losses(rng: np.random.Generator) -> dict:
    """Scalar losses, one per differentiable op, each smooth at its inputs."""
    x = Tensor(rng.normal(size=(2, 4, 5, 3)), dtype=np.float64)
    away = rng.normal(size=(2, 4, 5, 3))
    away = np.sign(away) * (0.1 + np.abs(away))
    targets = rng.integers(0, 256, size=(2, 4, 5))
    bins = rng.integers(0, 8, size=(2, 4, 5))

    def conv(p):
        out = conv2d_same(x, p["kernel"], p["bias"])
        return reduce_sum(mul(out, out))

    def masked(p):
        out = masked_conv(x, p["kernel"], p["bias"], "B")
        return reduce_sum(mul(out, out))

    return {
        "conv2d_same": (
            conv,
            {"kernel": rng.normal(size=(3, 3, 3, 2)), "bias": rng.normal(size=2)},
        ),
        "masked_conv": (
            masked,
            {"kernel": rng.normal(size=(3, 5, 3, 2)), "bias": rng.normal(size=2)},
        ),
        "relu": (lambda p: reduce_sum(mul(relu(p["x"]), x)), {"x": away}),
        "add": (
            lambda p: reduce_sum(mul(add(p["x"], p["b"]), x)),
            {"x": rng.normal(size=(2, 4, 5, 3)), "b": rng.normal(size=3)},
        ),
        "scale": (
            lambda p: reduce_mean(mul(scale(p["x"], 2.5), p["x"])),
            {"x": rng.normal(size=(2, 4, 5, 3))},
        ),
        "categorical_nll": (
            lambda p: likelihood.categorical_nll_loss(p["logits"], bins),
            {"logits": rng.normal(size=(2, 4, 5, 8))},
        ),
        "mixture_nll": (
            lambda p: likelihood.mixture_nll_loss(
                p["logits"], p["means"], p["log_scales"], targets
            ),
            {
                "logits": rng.normal(size=(2, 4, 5, 2)),
                "means": rng.uniform(0, 255, size=(2, 4, 5, 2)),
                "log_scales": rng.uniform(1.0, 3.0, size=(2, 4, 5, 2)),
            },
        ),
    }


@invariant("gradients")
def check_gradients(rng: np.random.Generator):
    for name, (loss_of, arrays) in _op_losses(rng).items():
        params = ParamSet(arrays)
        with ComputationRecord() as record:
            loss = loss_of(params)
        analytic = backward(loss, record, params)
        numeric = finite_diff_gradient(lambda p: loss_of(p).item(), params, h=1e-3)
        error = max_relative_error(analytic, numeric)
        _expect(error <= 1e-3, f"{name}: max relative gradient error {error:.2e} > 1e-3")


@invariant("pmf")
def check_pmf(rng: np.random.Generator):
    values = np.arange(256)
    for _ in range(100):
        mu = rng.uniform(-50, 305)
        log_s = np.log(rng.uniform(0.05, 100))
        pmf = likelihood.dlm_pmf(mu, log_s, values)
        _expect((pmf >= 0).all(), "negative pmf entry")
        _expect(abs(pmf.sum() - 1) <= 1e-6, f"pmf sums to {pmf.sum():.9f}")
        symmetric = likelihood.dlm_pmf(127.5, log_s, values)
        _expect(
            np.max(np.abs(symmetric - symmetric[::-1])) <= 1e-9, "pmf not symmetric"
        )


@invariant("pgm")
def check_pgm(rng: np.random.Generator):
    _expect(
        encode_pgm(RasterImage(np.array([[0, 255], [128, 64]], dtype=np.uint8)))
        == b"P5\n2 2\n255\n\x00\xff\x80\x40",
        "2x2 PGM encoding",
    )
    for _ in range(20):
        h, w = rng.integers(1, 40, size=2)
        image = RasterImage(rng.integers(0, 256, size=(h, w), dtype=np.uint8))
        _expect(decode_pgm(encode_pgm(image)) == image, "PGM round trip")


@invariant("fast_mode")
def check_fast_mode(rng: np.random.Generator):
    config = ModelConfig(
        image_h=6,
        image_w=9,
        num_resnet=1,
        num_filters=4,
        receptive_field=(2, 3),
        head=LogisticMixtureHead(1),
    )
    model = PixelCNN(config, init_params(config, int(rng.integers(2**31)), zero_head=False))
    seed = int(rng.integers(2**31))
    naive = sample_image(model, SampleConfig(), np.random.default_rng(seed))
    fast = sample_image(model, SampleConfig(fast_mode=True), np.random.default_rng(seed))
    _expect(naive == fast, "fast and naive sampling disagree")


def run_checks(seed: int = 0, out: typing.TextIO = None) -> bool:
    """Run every invariant group, printing one PASS/FAIL line per group."""
    out = out or sys.stdout
    passed = True
    for name, fn in INVARIANTS.items():
        try:
            fn(np.random.default_rng([seed, len(name)]))
        except InvariantError as ex:
            passed = False
            print(f"FAIL {name}: {ex}", file=out)
        else:
            print(f"PASS {name}", file=out)
    return passed
