"""Encoder backends behind one small interface.

An encoder exposes `width` plus `encode_texts` and `encode_images`, each
returning one row of raw (not yet normalized) features per input. Two
families are registered:

    hash-test, hash-<width>   deterministic stand-in that derives each
                              vector from a SHA-256 of the input content;
                              carries no semantics, exists so the job and
                              file plumbing can be exercised without model
                              weights
    clip:<arch>:<pretrained>  open_clip checkpoint, loaded lazily; needs
                              torch, open_clip_torch and pillow installed
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import ModelUnavailable

DEFAULT_HASH_WIDTH = 64


class HashEncoder:
    """Pseudo-encoder: content hash seeds a Gaussian draw, so identical
    inputs map to identical vectors and everything is reproducible."""

    def __init__(self, width: int = DEFAULT_HASH_WIDTH):
        if width < 2:
            raise ModelUnavailable(f"hash encoder width must be >= 2, got {width}")
        self.width = width

    def _vector(self, content: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(content).digest(), "big")
        return np.random.default_rng(seed).standard_normal(self.width)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        return np.stack([self._vector(t.encode("utf-8")) for t in texts])

    def encode_images(self, paths: list[Path]) -> np.ndarray:
        return np.stack([self._vector(Path(p).read_bytes()) for p in paths])


class ClipEncoder:
    """open_clip wrapper; import cost and weight download happen here."""

    def __init__(self, arch: str, pretrained: str, device: str = "cpu"):
        try:
            import open_clip
            import torch
        except ImportError as exc:
            raise ModelUnavailable(
                f"clip backend needs torch and open_clip_torch installed: {exc}"
            ) from None
        self._torch = torch
        self._device = device
        try:
            model, _, preprocess = open_clip.create_model_and_transforms(
                arch, pretrained=pretrained, device=device
            )
        except Exception as exc:
            raise ModelUnavailable(f"could not load clip model {arch!r}: {exc}") from None
        self._model = model.eval()
        self._preprocess = preprocess
        self._tokenizer = open_clip.get_tokenizer(arch)
        self.width = int(model.text_projection.shape[-1])

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        tokens = self._tokenizer(texts).to(self._device)
        with self._torch.no_grad():
            feats = self._model.encode_text(tokens)
        return feats.cpu().numpy().astype(np.float64)

    def encode_images(self, paths: list[Path]) -> np.ndarray:
        try:
            from PIL import Image
        except ImportError as exc:
            raise ModelUnavailable(f"clip image encoding needs pillow: {exc}") from None
        batch = self._torch.stack(
            [self._preprocess(Image.open(p).convert("RGB")) for p in paths]
        ).to(self._device)
        with self._torch.no_grad():
            feats = self._model.encode_image(batch)
        return feats.cpu().numpy().astype(np.float64)


def get_encoder(model_name: str, device: str = "cpu"):
    if model_name == "hash-test":
        return HashEncoder()
    if model_name.startswith("hash-"):
        suffix = model_name[len("hash-"):]
        if not suffix.isdigit():
            raise ModelUnavailable(f"unknown model {model_name!r}")
        return HashEncoder(width=int(suffix))
    if model_name.startswith("clip:"):
        parts = model_name.split(":")
        if len(parts) != 3:
            raise ModelUnavailable(
                f"clip model names look like clip:<arch>:<pretrained>, got {model_name!r}"
            )
        return ClipEncoder(parts[1], parts[2], device=device)
    raise ModelUnavailable(f"unknown model {model_name!r}")
