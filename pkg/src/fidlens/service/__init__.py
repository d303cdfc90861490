"""HTTP wrapper around the file-level pipelines."""

from .app import create_app

__all__ = ["create_app"]
