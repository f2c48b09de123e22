from importlib import metadata

__meta__ = metadata.metadata("bridge-pixelcnn")
__version__ = __meta__["version"]
