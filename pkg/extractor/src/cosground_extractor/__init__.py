"""Embedding extractor: images + commands + proposal boxes -> dataset directories."""

from .encoders import (
    EncoderLoadError,
    HashedBagOfWordsEncoder,
    SentenceTransformerEncoder,
    TorchImageEncoder,
    ToyImageEncoder,
    resize_crop,
    resolve_image_encoder,
    resolve_text_encoder,
)
from .extract import (
    CROP_POLICY,
    ClippedBoxWarning,
    ExtractionConfig,
    ExtractionError,
    extract,
)

__version__ = "0.1.0"

__all__ = [
    "CROP_POLICY",
    "ClippedBoxWarning",
    "EncoderLoadError",
    "ExtractionConfig",
    "ExtractionError",
    "HashedBagOfWordsEncoder",
    "SentenceTransformerEncoder",
    "TorchImageEncoder",
    "ToyImageEncoder",
    "extract",
    "resize_crop",
    "resolve_image_encoder",
    "resolve_text_encoder",
]
