import pytest

from src.app import create_app
from src.models.pixelcnn import CategoricalHead, ModelConfig
from src.models.training import Checkpoint
from src.services.checkpoint import save
from src.services.dataset import build_dataset
from src.services.pixelcnn import init_params


@pytest.fixture(scope="class")
def settings():
    return create_app(
        config_name="testing",
        dotenv=False,
        configs={"PER_SUBTYPE": 1, "IMAGE_WIDTH": 96, "IMAGE_HEIGHT": 24},
    )


@pytest.fixture(scope="class")
def data_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("bridges")
    build_dataset(path, per_subtype=1, width=96, height=24)
    return path


@pytest.fixture(scope="class")
def model_config():
    return ModelConfig(
        image_h=24,
        image_w=96,
        num_resnet=0,
        num_filters=4,
        receptive_field=(2, 3),
        dropout_p=0.0,
        head=CategoricalHead(),
    )


@pytest.fixture(scope="class")
def checkpoint_path(tmp_path_factory, model_config):
    path = tmp_path_factory.mktemp("ckpt") / "untrained.ckpt"
    save(path, Checkpoint(model_config, init_params(model_config)))
    return path
