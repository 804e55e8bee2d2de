"""Encoder backends, discoverable by name through :func:`load_backend`."""

from .base import (AdaptationConfig, AttentionView, Backend, EmbeddingVector,
                   TokenAlignment, check_row_stochastic)
from ..errors import InputError
from .mock import MockBackend

BACKENDS = ("mock", "hf")


def load_backend(backend_id: str, model_path: str | None = None, **options) -> Backend:
    """Instantiate a backend by name.

    ``mock`` reads an adapted state from ``model_path`` when one is given;
    ``hf`` requires ``model_path`` (a local directory or hub id).
    """
    if backend_id == "mock":
        if model_path:
            return MockBackend.from_weights(model_path, **options)
        return MockBackend(**options)
    if backend_id == "hf":
        from .hf import HFBackend

        if not model_path:
            raise InputError("the hf backend needs a model path")
        return HFBackend(model_path, **options)
    raise InputError(f"unknown backend {backend_id!r}; choose from {BACKENDS}")


__all__ = ["AdaptationConfig", "AttentionView", "Backend", "EmbeddingVector", "MockBackend",
           "TokenAlignment", "check_row_stochastic", "load_backend", "BACKENDS"]
