import math

import numpy as np
import pytest

from src.models.likelihood import NllReport, QuantizerConfig
from src.models.pixelcnn import CategoricalHead, LogisticMixtureHead, PixelDistribution
from src.numerics import ComputationRecord, ParamSet, Tensor, backward, finite_diff_gradient, max_relative_error
from src.services.likelihood import (
    categorical_nll,
    dequantize,
    dlm_log_pmf,
    dlm_pmf,
    head_nll,
    mixture_nll,
    mixture_nll_loss,
    pixel_pmf,
    quantize,
    sample_pixel,
)
from src.utils.errors import ValidationError


class TestQuantizer:
    def test_identity_at_256(self):
        cfg = QuantizerConfig(256)
        values = np.arange(256)
        assert np.array_equal(quantize(values, cfg), values)
        assert np.array_equal(dequantize(values, cfg), values)

    def test_two_bins(self):
        cfg = QuantizerConfig(2)
        assert quantize(127, cfg) == 0
        assert quantize(128, cfg) == 1
        assert dequantize(np.array([0, 1]), cfg).tolist() == [64, 192]

    def test_top_bin(self):
        assert quantize(255, QuantizerConfig(8)) == 7

    @pytest.mark.parametrize("k", [2, 4, 8, 16, 256])
    def test_round_trip_all_values(self, k):
        cfg = QuantizerConfig(k)
        for v in range(256):
            b = quantize(v, cfg)
            assert 0 <= b < k
            assert quantize(dequantize(b, cfg), cfg) == b

    @pytest.mark.parametrize("v", [-1, 256])
    def test_value_out_of_range(self, v):
        with pytest.raises(ValidationError):
            quantize(v, QuantizerConfig(4))

    def test_bin_out_of_range(self):
        with pytest.raises(ValidationError):
            dequantize(4, QuantizerConfig(4))

    def test_bin_count_bounds(self):
        with pytest.raises(ValidationError):
            QuantizerConfig(1)


class TestCategoricalNll:
    @pytest.mark.parametrize("prob, expected", [(0.8, 0.2231), (0.05, 2.996)])
    def test_single_pixel(self, prob, expected):
        logits = Tensor(np.log([[prob, 1 - prob]]))
        report = categorical_nll(logits, np.array([0]))
        assert report.total_nats == pytest.approx(expected, abs=1e-3)

    def test_uniform(self):
        logits = Tensor(np.zeros((2, 3, 4, 256)))
        report = categorical_nll(logits, np.zeros((2, 3, 4), dtype=int))
        assert report.nats_per_dim == pytest.approx(math.log(256), abs=1e-9)
        assert report.bits_per_dim == pytest.approx(8.0, abs=1e-9)

    def test_shift_invariant(self):
        rng = np.random.default_rng(0)
        raw = rng.normal(size=(3, 5, 8))
        targets = rng.integers(0, 8, (3, 5))
        a = categorical_nll(Tensor(raw), targets).total_nats
        b = categorical_nll(Tensor(raw + 17.0), targets).total_nats
        assert a == pytest.approx(b, abs=1e-9)

    def test_target_out_of_range(self):
        with pytest.raises(ValidationError, match="out of range"):
            categorical_nll(Tensor(np.zeros((1, 4))), np.array([4]))

    def test_true_distribution_scores_best(self):
        rng = np.random.default_rng(1)
        true = np.array([0.6, 0.2, 0.15, 0.05])
        other = np.array([0.25, 0.25, 0.25, 0.25])
        targets = rng.choice(4, size=1000, p=true)
        own = categorical_nll(Tensor(np.tile(np.log(true), (1000, 1))), targets)
        rival = categorical_nll(Tensor(np.tile(np.log(other), (1000, 1))), targets)
        assert own.total_nats < rival.total_nats


class TestDlmPmf:
    def test_normalized(self):
        rng = np.random.default_rng(2)
        values = np.arange(256)
        for _ in range(1000):
            mu = rng.uniform(-50, 305)
            log_s = math.log(rng.uniform(0.05, 100))
            assert dlm_pmf(mu, log_s, values).sum() == pytest.approx(1.0, abs=1e-6)

    def test_left_edge(self):
        assert float(dlm_pmf(0.0, math.log(0.5), 0)) == pytest.approx(0.7311, abs=1e-4)

    def test_symmetric_about_centre(self):
        values = np.arange(256)
        for log_s in (math.log(0.5), 0.0, math.log(40.0)):
            pmf = dlm_pmf(127.5, log_s, values)
            assert np.max(np.abs(pmf - pmf[::-1])) <= 1e-9

    def test_stable_far_from_mean(self):
        assert np.isfinite(dlm_log_pmf(0.0, math.log(0.05), 200))


def mixture_dist(logits, means, log_scales):
    return PixelDistribution(
        head=LogisticMixtureHead(num_components=logits.shape[-1]),
        mixture_logits=Tensor(logits),
        means=Tensor(means),
        log_scales=Tensor(log_scales),
    )


class TestMixtureNll:
    def test_single_component(self):
        targets = np.array([[0, 37], [128, 255]])
        means = np.array([[[10.0], [40.0]], [[120.0], [250.0]]])
        log_scales = np.full((2, 2, 1), math.log(3.0))
        report = mixture_nll(mixture_dist(np.zeros((2, 2, 1)), means, log_scales), targets)
        expected = -dlm_log_pmf(means[..., 0], log_scales[..., 0], targets).sum()
        assert report.total_nats == pytest.approx(expected, abs=1e-9)

    def test_identical_components_collapse(self):
        targets = np.array([[3, 200]])
        means = np.array([[[5.0], [190.0]]])
        log_scales = np.full((1, 2, 1), 1.5)
        single = mixture_nll(mixture_dist(np.zeros((1, 2, 1)), means, log_scales), targets)
        double = mixture_nll(
            mixture_dist(
                np.array([[[0.3, -2.0], [1.0, 4.0]]]),
                np.repeat(means, 2, axis=-1),
                np.repeat(log_scales, 2, axis=-1),
            ),
            targets,
        )
        assert double.total_nats == pytest.approx(single.total_nats, abs=1e-9)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(3)
        targets = np.array([[[0, 90], [255, 140]]])
        params = ParamSet(
            {
                "logits": rng.normal(size=(1, 2, 2, 2)),
                "means": rng.uniform(0, 255, size=(1, 2, 2, 2)),
                "log_scales": rng.uniform(1.0, 3.0, size=(1, 2, 2, 2)),
            }
        )

        def loss_of(p):
            return mixture_nll_loss(p["logits"], p["means"], p["log_scales"], targets)

        with ComputationRecord() as record:
            loss = loss_of(params)
        analytic = backward(loss, record)
        numeric = finite_diff_gradient(lambda p: loss_of(p).item(), params)
        assert max_relative_error(analytic, numeric) <= 1e-3

    def test_shape_mismatch(self):
        dist = mixture_dist(np.zeros((1, 2, 1)), np.zeros((1, 2, 1)), np.zeros((1, 2, 1)))
        with pytest.raises(ValidationError, match="shape"):
            mixture_nll(dist, np.zeros((1, 3)))


class TestHeadNll:
    def test_categorical_quantizes_targets(self):
        dist = PixelDistribution(head=CategoricalHead(4), logits=Tensor(np.zeros((1, 2, 2, 4))))
        report = head_nll(dist, np.array([[[0, 255], [64, 200]]], dtype=np.uint8))
        assert report.pixel_count == 4
        assert report.total_nats == pytest.approx(4 * math.log(4))

    def test_reports_add(self):
        total = NllReport(2.0, 1) + NllReport(4.0, 3)
        assert total == NllReport(6.0, 4)
        assert total.nats_per_dim == 1.5


class TestPixelPmf:
    def test_categorical_mass_on_bin_centres(self):
        pmf = pixel_pmf(CategoricalHead(2), (np.log([0.25, 0.75]),))
        assert pmf[64] == pytest.approx(0.25)
        assert pmf[192] == pytest.approx(0.75)
        assert pmf.sum() == pytest.approx(1.0)

    def test_mixture_sums_to_one(self):
        pmf = pixel_pmf(
            LogisticMixtureHead(2),
            (np.array([0.1, -0.4]), np.array([30.0, 180.0]), np.array([1.0, 2.0])),
        )
        assert pmf.shape == (256,)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-9)


class TestSamplePixel:
    def test_zero_temperature_is_argmax(self):
        logits = np.zeros(8)
        logits[7] = 3.0
        value = sample_pixel(CategoricalHead(8), (logits,), 0.0, np.random.default_rng(0))
        assert value == dequantize(7, QuantizerConfig(8)) == 240

    def test_zero_temperature_ties_pick_lowest(self):
        value = sample_pixel(CategoricalHead(4), (np.zeros(4),), 0.0, np.random.default_rng(0))
        assert value == dequantize(0, QuantizerConfig(4))

    def test_frequency(self):
        logits = np.full(256, -1e9)
        logits[0], logits[255] = math.log(0.25), math.log(0.75)
        rng = np.random.default_rng(4)
        draws = [sample_pixel(CategoricalHead(), (logits,), 1.0, rng) for _ in range(10_000)]
        assert 0.73 <= np.mean(np.array(draws) == 255) <= 0.77

    def test_deterministic(self):
        params = (np.array([0.0]), np.array([100.0]), np.array([2.0]))
        draws = [
            sample_pixel(LogisticMixtureHead(), params, 1.0, np.random.default_rng(11))
            for _ in range(2)
        ]
        assert draws[0] == draws[1]

    def test_reproduces_pmf(self):
        head = LogisticMixtureHead()
        params = (np.array([0.0]), np.array([100.0]), np.array([math.log(10.0)]))
        pmf = pixel_pmf(head, params)
        rng = np.random.default_rng(5)
        draws = [sample_pixel(head, params, 1.0, rng) for _ in range(100_000)]
        empirical = np.bincount(draws, minlength=256) / len(draws)
        assert 0.5 * np.abs(empirical - pmf).sum() <= 0.02

    def test_negative_temperature(self):
        with pytest.raises(ValidationError):
            sample_pixel(CategoricalHead(4), (np.zeros(4),), -0.5, np.random.default_rng(0))
