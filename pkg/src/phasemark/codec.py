"""Deterministic image <-> latent transforms standing in for a VAE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import ImageBuffer, LatentTensor


@dataclass(frozen=True)
class IdentityCodec:
    """No image stage: latents (e.g. PMLT files from an external VAE) are used as-is."""

    name = "identity"
    factor = 1

    def encode(self, img: ImageBuffer) -> LatentTensor:
        raise ShapeError("identity codec has no image stage; pass a LatentTensor")

    def decode(self, lat: LatentTensor) -> ImageBuffer:
        raise ShapeError("identity codec has no image stage; latents stay latents")

    def latent_channels(self, image_channels: int | None = None) -> int | None:
        return None


def _check_divisible(h: int, w: int, f: int):
    if h % f or w % f:
        raise ShapeError(f"image {h}x{w} is not divisible by codec factor {f}")


def clipped_fraction(lat: LatentTensor) -> float:
    """Fraction of latent values that decoding will clamp into [0, 1]."""
    d = lat.data
    return float(np.count_nonzero((d < 0.0) | (d > 1.0))) / d.size


@dataclass(frozen=True)
class SpaceToDepthCodec:
    """Grayscale ``H x W`` -> ``(H/f) x (W/f) x f^2`` by pixel rearrangement.

    Channel ``a * f + b`` holds the pixels at offset ``(a, b)`` inside each
    ``f x f`` cell. The map is orthogonal, so MSE is identical in both domains.
    """

    factor: int = 8
    name = "s2d"

    def encode(self, img: ImageBuffer) -> LatentTensor:
        f = self.factor
        if img.channels != 1:
            raise ShapeError(f"space-to-depth expects a grayscale image, got {img.channels} channels")
        h, w = img.height, img.width
        _check_divisible(h, w, f)
        x = img.pixels[:, :, 0].reshape(h // f, f, w // f, f)
        return LatentTensor(x.transpose(0, 2, 1, 3).reshape(h // f, w // f, f * f))

    def decode(self, lat: LatentTensor) -> ImageBuffer:
        f = self.factor
        if lat.channels != f * f:
            raise ShapeError(f"space-to-depth latent needs {f * f} channels, got {lat.channels}")
        h, w = lat.height, lat.width
        x = lat.data.reshape(h, w, f, f).transpose(0, 2, 1, 3).reshape(h * f, w * f)
        return ImageBuffer(np.clip(x, 0.0, 1.0))

    def latent_channels(self, image_channels: int | None = None) -> int:
        return self.factor**2


@dataclass(frozen=True)
class BlockMeanCodec:
    """Per-channel ``f x f`` block means; decoding upsamples by replication."""

    factor: int = 8
    name = "blockmean"

    def encode(self, img: ImageBuffer) -> LatentTensor:
        f = self.factor
        h, w, c = img.shape
        _check_divisible(h, w, f)
        # two single-axis sums are several times faster than one strided mean
        rows = img.pixels.reshape(h // f, f, w, c).sum(axis=1, dtype=np.float64)
        return LatentTensor(rows.reshape(h // f, w // f, f, c).sum(axis=2) / (f * f))

    def decode(self, lat: LatentTensor) -> ImageBuffer:
        f = self.factor
        if lat.channels not in (1, 3, 4):
            raise ShapeError(f"block-mean latent must have 1, 3 or 4 channels, got {lat.channels}")
        x = np.clip(lat.data, 0.0, 1.0)
        return ImageBuffer(np.repeat(np.repeat(x, f, axis=0), f, axis=1))

    def latent_channels(self, image_channels: int | None = None) -> int | None:
        return image_channels


Codec = IdentityCodec | SpaceToDepthCodec | BlockMeanCodec

CODEC_NAMES = ("identity", "s2d", "blockmean")


def make_codec(name: str, factor: int = 8) -> Codec:
    if factor < 1:
        raise ValueError(f"codec factor must be positive, got {factor}")
    if name == "identity":
        return IdentityCodec()
    if name == "s2d":
        return SpaceToDepthCodec(factor)
    if name == "blockmean":
        return BlockMeanCodec(factor)
    raise ValueError(f"unknown codec {name!r}; expected one of {CODEC_NAMES}")
