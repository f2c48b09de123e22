import json
import struct

import numpy as np
import pytest

from src.models.pixelcnn import CategoricalHead, LogisticMixtureHead, ModelConfig
from src.models.training import AdamState, Checkpoint
from src.services.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load, save
from src.services.pixelcnn import init_params
from src.utils.errors import FormatError, StorageError, ValidationError


@pytest.fixture(scope="class", params=(CategoricalHead(8), LogisticMixtureHead(2)))
def checkpoint(request):
    config = ModelConfig(
        image_h=6, image_w=8, num_resnet=1, num_filters=4, receptive_field=(2, 3), head=request.param
    )
    params = init_params(config, rng_seed=3, zero_head=False)
    rng = np.random.default_rng(1)
    moments = AdamState(
        m={name: rng.normal(size=params[name].shape).astype(np.float32) for name in params},
        v={name: rng.random(size=params[name].shape).astype(np.float32) for name in params},
    )
    return Checkpoint(config, params, moments, step=17, rng_state=rng.bit_generator.state)


class TestCheckpointFormat:
    def test_save_load_save_is_byte_identical(self, checkpoint, tmp_path):
        first, second = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save(first, checkpoint)
        save(second, load(first))
        assert first.read_bytes() == second.read_bytes()

    def test_fields_survive(self, checkpoint):
        restored = decode_checkpoint(encode_checkpoint(checkpoint), expected=checkpoint.config)
        assert restored.config == checkpoint.config
        assert restored.step == 17
        assert restored.rng_state == checkpoint.rng_state
        for name in checkpoint.params:
            assert np.array_equal(restored.params[name].data, checkpoint.params[name].data)
            assert np.array_equal(restored.moments.v[name], checkpoint.moments.v[name])

    def test_starts_with_magic(self, checkpoint):
        assert encode_checkpoint(checkpoint).startswith(MAGIC)

    def test_flipped_magic(self, checkpoint):
        data = bytearray(encode_checkpoint(checkpoint))
        data[0] ^= 0xFF
        with pytest.raises(FormatError, match="magic"):
            decode_checkpoint(bytes(data))

    def test_truncated(self, checkpoint):
        data = encode_checkpoint(checkpoint)
        with pytest.raises(FormatError, match="truncated"):
            decode_checkpoint(data[:-5])

    def test_trailing_bytes(self, checkpoint):
        with pytest.raises(FormatError, match="trailing"):
            decode_checkpoint(encode_checkpoint(checkpoint) + b"\x00")

    def test_config_mismatch_names_field(self, checkpoint):
        other = ModelConfig(
            image_h=6,
            image_w=8,
            num_resnet=1,
            num_filters=6,
            receptive_field=(2, 3),
            head=checkpoint.config.head,
        )
        with pytest.raises(ValidationError, match="num_filters"):
            decode_checkpoint(encode_checkpoint(checkpoint), expected=other)

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError):
            load(tmp_path / "nothing.ckpt")


def rewrite_layout(data: bytes, mutate) -> bytes:
    _, _, length = struct.unpack_from("<4sHI", data)
    header = json.loads(data[10 : 10 + length])
    mutate(header["arrays"])
    blob = json.dumps(header).encode()
    return data[:6] + struct.pack("<I", len(blob)) + blob + data[10 + length :]


class TestCorruptLayout:
    @pytest.mark.parametrize(
        "mutate, message",
        [
            (lambda arrays: arrays[0].__setitem__(0, "extra"), "unknown array section"),
            (lambda arrays: arrays[0].pop(), "corrupt checkpoint header"),
            (lambda arrays: arrays[0].__setitem__(2, [-1, 3]), "invalid shape"),
            (lambda arrays: arrays.__setitem__(0, 7), "corrupt checkpoint header"),
        ],
    )
    def test_rejected_as_format_error(self, checkpoint, mutate, message):
        data = rewrite_layout(encode_checkpoint(checkpoint), mutate)
        with pytest.raises(FormatError, match=message):
            decode_checkpoint(data)
