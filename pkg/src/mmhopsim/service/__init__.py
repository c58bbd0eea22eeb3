"""HTTP service exposing the simulator."""

from .app import create_app  # noqa: F401
