"""Reference HTTP scoring service for the cascade-rank wire protocol."""

from .app import create_app
from .config import ServiceConfig

__version__ = "0.1.0"
