from dataclasses import dataclass

from src.settings.env import env


@dataclass
class BaseConfig:
    """Base configurations."""

    DEBUG = False
    TESTING = False

    # Dataset location and generation
    DATA_DIR = env.str("DATA_DIR", "data/bridges")
    MASTER_SEED = env.int("MASTER_SEED", 42)
    PER_SUBTYPE = env.int("PER_SUBTYPE", 1200)
    IMAGE_WIDTH = env.int("IMAGE_WIDTH", 192)
    IMAGE_HEIGHT = env.int("IMAGE_HEIGHT", 48)

    # number of threads rendering dataset images
    WORKERS = env.int("WORKERS", 1)

    # Sampling
    SAMPLE_TEMPERATURE = env.float("SAMPLE_TEMPERATURE", 1.0)

    # seed used by the `check` invariant suite
    CHECK_SEED = env.int("CHECK_SEED", 0)


@dataclass
class ProductionConfig(BaseConfig):
    ENV = "production"
    LOG_LEVEL = "INFO"


@dataclass
class DevelopmentConfig(BaseConfig):
    ENV = "development"
    DEBUG = True
    LOG_LEVEL = "DEBUG"


@dataclass
class TestingConfig(BaseConfig):
    ENV = "testing"
    TESTING = True
    LOG_LEVEL = "DEBUG"
    PER_SUBTYPE = 2
