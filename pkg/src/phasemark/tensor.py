"""Latent and image containers, file I/O, and fidelity metrics.

Latents are stored as float32 ``(H, W, C)`` arrays and persisted in the
PMLT format::

    0-3   magic b"PMLT"
    4     version (1)
    5     dtype (1 = IEEE-754 binary32 little-endian)
    6     ndim (3)
    7     reserved (0)
    8-19  H, W, C as little-endian u32
    20-   H*W*C floats, channel-planar row-major

Images hold float32 pixels in [0, 1]; files are 8-bit PNG or PGM/PPM.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, ShapeError, TruncatedFileError

PMLT_MAGIC = b"PMLT"
PMLT_VERSION = 1
PMLT_DTYPE_F32 = 1
_HEADER = struct.Struct("<4sBBBB3I")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LatentTensor:
    """Real ``(height, width, channels)`` tensor carrying the watermark."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, copy=True)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or 0 in arr.shape:
            raise ShapeError(f"latent must be a non-empty HxWxC array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("latent contains NaN or Inf")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, LatentTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(
            self.data.view(np.uint32), other.data.view(np.uint32)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Image with float32 pixels in [0, 1], shape ``(height, width, channels)``.

    Grayscale (1), RGB (3) and RGBA (4) are supported.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float32, copy=True)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or 0 in arr.shape[:2] or arr.shape[2] not in (1, 3, 4):
            raise ShapeError(f"image must be HxW with 1, 3 or 4 channels, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image pixels must lie in [0, 1]")
        object.__setattr__(self, "pixels", _frozen(arr))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Message:
    """Fixed-length bit vector. Bit 0 is the most significant bit of the hex form."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.array(self.bits, dtype=np.uint8, copy=True).ravel()
        if arr.size and arr.max() > 1:
            raise ValueError("message bits must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(arr))

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other):
        if not isinstance(other, Message):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((len(self), self.bits.tobytes()))

    def __repr__(self):
        return f"Message(L={len(self)}, hex={self.to_hex()!r})"

    @classmethod
    def from_hex(cls, text: str, length: int | None = None) -> "Message":
        """Parse a hex string; ``length`` trims to the first ``length`` bits.

        Trimmed padding bits must be zero.
        """
        text = text.strip().lower().removeprefix("0x")
        try:
            raw = bytes.fromhex(text if len(text) % 2 == 0 else text + "0")
        except ValueError as exc:
            raise FormatError(f"invalid hex message {text!r}") from exc
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[: 4 * len(text)]
        if length is not None:
            if length > bits.size or bits[length:].any():
                raise FormatError(f"hex message {text!r} does not encode exactly {length} bits")
            bits = bits[:length]
        return cls(bits)

    def to_hex(self) -> str:
        padded = np.zeros(-(-len(self) // 4) * 4, dtype=np.uint8)
        padded[: len(self)] = self.bits
        return np.packbits(padded).tobytes().hex()[: padded.size // 4]

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "Message":
        return cls(rng.integers(0, 2, size=length, dtype=np.uint8))

    def complement(self) -> "Message":
        return Message(1 - self.bits)


# ---------------------------------------------------------------------------
# PMLT latent files
# ---------------------------------------------------------------------------

def save_latent(t: LatentTensor, path: str | os.PathLike) -> None:
    h, w, c = t.shape
    header = _HEADER.pack(PMLT_MAGIC, PMLT_VERSION, PMLT_DTYPE_F32, 3, 0, h, w, c)
    planar = np.ascontiguousarray(np.moveaxis(t.data, 2, 0), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(planar.tobytes())


def load_latent(path: str | os.PathLike) -> LatentTensor:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        if blob[:4] != PMLT_MAGIC[: len(blob)]:
            raise FormatError(f"{path}: bad magic")
        raise TruncatedFileError(f"{path}: header truncated ({len(blob)} bytes)")
    magic, version, dtype, ndim, _reserved, h, w, c = _HEADER.unpack_from(blob)
    if magic != PMLT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != PMLT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != PMLT_DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if ndim != 3 or 0 in (h, w, c):
        raise FormatError(f"{path}: bad dims ndim={ndim} shape=({h}, {w}, {c})")
    need = _HEADER.size + 4 * h * w * c
    if len(blob) < need:
        raise TruncatedFileError(f"{path}: payload truncated ({len(blob)} of {need} bytes)")
    if len(blob) > need:
        raise FormatError(f"{path}: {len(blob) - need} trailing bytes")
    planar = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(c, h, w)
    return LatentTensor(np.moveaxis(planar, 0, 2))


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

_MODES = {"L": 1, "RGB": 3, "RGBA": 4}


def load_image(path: str | os.PathLike) -> ImageBuffer:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            if mode not in _MODES:
                raise FormatError(f"{path}: unsupported image mode/bit depth {mode!r}")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, SyntaxError) as exc:
        raise FormatError(f"{path}: not a readable PNG/PGM/PPM image") from exc
    except OSError as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError(f"{path}: corrupt image ({exc})") from exc
    return ImageBuffer(arr.astype(np.float32) / 255.0)


def quantize8(pixels: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to uint8 by ``round(v * 255)`` with clamping."""
    return np.clip(np.rint(np.asarray(pixels, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_image(img: ImageBuffer, path: str | os.PathLike) -> None:
    q = quantize8(img.pixels)
    q = q[:, :, 0] if img.channels == 1 else q
    ext = os.fspath(path).lower().rsplit(".", 1)[-1]
    if ext == "pgm" and img.channels != 1:
        raise FormatError("PGM output requires a grayscale image")
    if ext == "ppm" and img.channels != 3:
        raise FormatError("PPM output requires an RGB image")
    Image.fromarray(q).save(path)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images."""
    err = mse(a.pixels, b.pixels)
    return math.inf if err == 0.0 else 10.0 * math.log10(1.0 / err)


def latent_mse(a: LatentTensor, b: LatentTensor) -> float:
    return mse(a.data, b.data)


def bit_accuracy(a: Message, b: Message) -> float:
    if len(a) != len(b):
        raise ShapeError(f"message length mismatch {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("bit accuracy of empty messages is undefined")
    return int(np.count_nonzero(a.bits == b.bits)) / len(a)
