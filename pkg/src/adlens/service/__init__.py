from .registry import Catalog, Registry, RegistryError
from .app import create_app
from . import pipeline

__all__ = ["Catalog", "Registry", "RegistryError", "create_app", "pipeline"]
