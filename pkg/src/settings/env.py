import importlib

import environs

from src.utils.errors import ValidationError


def create_env():
    dotenv = environs.Env()
    return dotenv


def load_dotenv(dotenv: bool):
    """Load enviroment from given file or dict."""
    if dotenv:
        env.read_env(".env")


def config_class(environment: str):
    """Link given environment to a config class."""
    module = importlib.import_module(f"{__package__}.config")
    try:
        return getattr(module, f"{environment.capitalize()}Config")
    except AttributeError:
        raise ValidationError(f"unknown environment {environment!r}") from None


# the application environment
env = create_env()
