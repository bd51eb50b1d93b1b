"""Encoder registry: names resolve to image/text feature encoders.

Two families are always available and need no downloaded weights:

- ``toy-image-<d>`` / ``hashed-bow-<d>``: fast deterministic encoders (a
  seeded random projection of the resized crop; a hashed bag of words).
  These exist so the extraction pipeline can run and be tested anywhere.
- ``untrained-resnet18``: a torchvision ResNet-18 with seed-0 random weights
  and the classification head removed, for realistic feature geometry
  without pretrained downloads.

Pretrained names (``resnet18``, ``efficientnet-b2``, ..., and any
sentence-transformers model id) resolve when their weights are obtainable;
otherwise resolution raises EncoderLoadError.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
from PIL import Image


class EncoderLoadError(Exception):
    """The named encoder does not exist or its weights could not be loaded."""


_TORCHVISION_IMAGE_MODELS = (
    "resnet18", "resnet34", "resnet50",
    "efficientnet-b0", "efficientnet-b1", "efficientnet-b2",
    "efficientnet-b3", "efficientnet-b4",
)


def _name_seed(name: str) -> int:
    # stable across processes, unlike hash()
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


class ToyImageEncoder:
    """Seeded random projection of the 16x16 resized crop.

    The flattened pixel vector gets a constant slot appended and the first
    output channel a fixed offset larger than tanh's range, so no crop, not
    even an all-black one, can produce a zero-norm feature row.
    """

    input_size = (16, 16)

    def __init__(self, dim: int, name: str):
        if dim < 1:
            raise EncoderLoadError(f"toy image encoder dim must be >= 1, got {dim}")
        self.name = name
        self.dim = dim
        n_in = self.input_size[0] * self.input_size[1] * 3 + 1
        rng = np.random.default_rng(_name_seed(name))
        self._proj = rng.standard_normal((dim, n_in)) / np.sqrt(n_in)

    def encode(self, crops: list[np.ndarray]) -> np.ndarray:
        out = np.empty((len(crops), self.dim), dtype=np.float64)
        for i, crop in enumerate(crops):
            v = np.append(crop.astype(np.float64).ravel() / 255.0, 1.0)
            out[i] = np.tanh(self._proj @ v)
            out[i, 0] += 1.5
        return out.astype(np.float32)


class HashedBagOfWordsEncoder:
    """Signed hashing of lowercase word tokens into dim-1 slots.

    Slot 0 carries 1 + 0.1 * token_count, so every command, including the
    empty string, has norm >= 1. Token hashing uses sha256, which is stable
    across processes and runs.
    """

    def __init__(self, dim: int, name: str):
        if dim < 2:
            raise EncoderLoadError(f"hashed bag-of-words dim must be >= 2, got {dim}")
        self.name = name
        self.dim = dim

    def encode(self, commands: list[str]) -> np.ndarray:
        out = np.zeros((len(commands), self.dim), dtype=np.float64)
        for i, command in enumerate(commands):
            tokens = re.findall(r"[a-z0-9]+", command.lower())
            out[i, 0] = 1.0 + 0.1 * len(tokens)
            for token in tokens:
                digest = hashlib.sha256(token.encode()).digest()
                slot = 1 + int.from_bytes(digest[:4], "little") % (self.dim - 1)
                sign = 1.0 if digest[4] & 1 else -1.0
                out[i, slot] += sign
        return out.astype(np.float32)


class TorchImageEncoder:
    """Torchvision backbone with the classifier removed; pooled output as the feature."""

    input_size = (224, 224)
    # standard per-channel normalization used by torchvision's pretrained models
    _MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
    _STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)
    _BATCH = 32  # fixed chunking keeps output bytes independent of input count

    def __init__(self, name: str, pretrained: bool):
        try:
            import torch
            import torchvision.models as tvm
        except ImportError as exc:
            raise EncoderLoadError(f"encoder {name!r} needs torch/torchvision: {exc}") from exc
        self.name = name
        arch = "resnet18" if name == "untrained-resnet18" else name.replace("-", "_")
        try:
            torch.manual_seed(0)  # fixes the untrained initialization
            weights = "DEFAULT" if pretrained else None
            model = tvm.get_model(arch, weights=weights)
        except Exception as exc:
            raise EncoderLoadError(f"could not load weights for {name!r}: {exc}") from exc
        if hasattr(model, "fc"):  # resnet family
            self.dim = model.fc.in_features
            model.fc = torch.nn.Identity()
        else:  # efficientnet family
            self.dim = model.classifier[-1].in_features
            model.classifier = torch.nn.Identity()
        model.eval()
        self._model = model
        self._torch = torch

    def encode(self, crops: list[np.ndarray]) -> np.ndarray:
        torch = self._torch
        arr = np.stack([c.astype(np.float32) / 255.0 for c in crops])
        arr = (arr - self._MEAN) / self._STD
        batch = torch.from_numpy(arr.transpose(0, 3, 1, 2))
        outs = []
        with torch.no_grad():
            for start in range(0, len(crops), self._BATCH):
                outs.append(self._model(batch[start:start + self._BATCH]).numpy())
        return np.concatenate(outs).astype(np.float32)


class SentenceTransformerEncoder:
    """Pretrained sentence-embedding model resolved by its published id."""

    def __init__(self, name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderLoadError(f"encoder {name!r} needs sentence-transformers: {exc}") from exc
        try:
            self._model = SentenceTransformer(name)
        except Exception as exc:
            raise EncoderLoadError(f"could not load sentence encoder {name!r}: {exc}") from exc
        self.name = name
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, commands: list[str]) -> np.ndarray:
        return np.asarray(
            self._model.encode(commands, convert_to_numpy=True, show_progress_bar=False),
            dtype=np.float32,
        )


def resolve_image_encoder(name: str):
    m = re.fullmatch(r"toy-image-(\d+)", name)
    if m:
        return ToyImageEncoder(int(m.group(1)), name)
    if name == "untrained-resnet18":
        return TorchImageEncoder(name, pretrained=False)
    if name in _TORCHVISION_IMAGE_MODELS:
        return TorchImageEncoder(name, pretrained=True)
    raise EncoderLoadError(
        f"unknown image encoder {name!r}; expected toy-image-<d>, untrained-resnet18, "
        f"or one of {', '.join(_TORCHVISION_IMAGE_MODELS)}"
    )


def resolve_text_encoder(name: str):
    m = re.fullmatch(r"hashed-bow-(\d+)", name)
    if m:
        return HashedBagOfWordsEncoder(int(m.group(1)), name)
    return SentenceTransformerEncoder(name)


def resize_crop(image: Image.Image, box: tuple[float, float, float, float],
                size: tuple[int, int]) -> np.ndarray:
    """Tight pixel-aligned crop of box, resized to (h, w), as an HxWx3 uint8 array."""
    x1, y1, x2, y2 = box
    left, top = int(np.floor(x1)), int(np.floor(y1))
    right, bottom = int(np.ceil(x2)), int(np.ceil(y2))
    crop = image.crop((left, top, right, bottom)).resize(
        (size[1], size[0]), Image.BILINEAR)
    return np.asarray(crop, dtype=np.uint8)
