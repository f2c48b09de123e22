import logging

from src.settings.env import config_class, env, load_dotenv


def create_app(config_name=None, dotenv=True, configs=None) -> dict:
    """Resolve settings for the given environment and configure logging."""

    # load object-based default configuration
    load_dotenv(dotenv)
    config_name = config_name or env.str("BRIDGE_PIXELCNN_ENV", "production")
    cls = config_class(config_name)
    settings = {key: getattr(cls, key) for key in dir(cls) if key.isupper()}
    settings.update(configs or {})

    setup_logging(settings)

    return settings


def setup_logging(settings: dict):
    """Initial setups."""
    logging.basicConfig(
        level=settings["LOG_LEVEL"],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger("src").setLevel(settings["LOG_LEVEL"])
