"""Seedable distortions for robustness benchmarking.

Every attack takes an :class:`ImageBuffer` or a :class:`LatentTensor` and
returns the same kind. Pixel results are clamped to [0, 1]; latents are not.

Center crops drop the odd leftover row/column from the leading edge, i.e.
the window starts at ``ceil((H - s) / 2)``. The detector's own crop starts at
``floor``, so the two conventions cancel and a watermark window centered by
the embedder stays aligned after any centered attack crop.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import ContractError, ShapeError
from .tensor import ImageBuffer, LatentTensor, load_image, load_latent

Carrier = ImageBuffer | LatentTensor


@dataclass(frozen=True)
class Contrast:
    factor: float = 0.5

    def label(self):
        return f"contrast({self.factor:g})"


@dataclass(frozen=True)
class GaussianBlur:
    radius: float = 5.0

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("blur radius must be non-negative")

    def label(self):
        return f"blur({self.radius:g})"


@dataclass(frozen=True)
class AdditiveNoise:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be non-negative")

    def label(self):
        return f"noise({self.sigma:g})"


@dataclass(frozen=True)
class Quantize8:
    def label(self):
        return "quantize8"


@dataclass(frozen=True)
class CenterCrop:
    scale: float

    def __post_init__(self):
        if not 0 < self.scale <= 1:
            raise ValueError("crop scale must lie in (0, 1]")

    def label(self):
        return f"center_crop({self.scale:g})"


@dataclass(frozen=True)
class RandomCrop:
    scale: float
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.scale <= 1:
            raise ValueError("crop scale must lie in (0, 1]")

    def label(self):
        return f"random_crop({self.scale:g})"


@dataclass(frozen=True)
class LatentCenterCrop:
    size: int

    def label(self):
        return f"latent_center_crop({self.size})"


@dataclass(frozen=True)
class External:
    """Substitute a file produced by a third-party tool (JPEG, BM3D, regeneration).

    Looks up ``<directory>/<trial_id>.png`` (or ``.pmlt`` for latents).
    """

    directory: str

    def label(self):
        return f"external({os.path.basename(os.path.normpath(self.directory))})"

    def path_for(self, trial_id: str, latent: bool = False) -> Path:
        return Path(self.directory) / f"{trial_id}.{'pmlt' if latent else 'png'}"


AttackSpec = Contrast | GaussianBlur | AdditiveNoise | Quantize8 | CenterCrop | RandomCrop | LatentCenterCrop | External


def _values(x: Carrier) -> np.ndarray:
    return x.pixels if isinstance(x, ImageBuffer) else x.data


def _rewrap(x: Carrier, arr: np.ndarray) -> Carrier:
    if isinstance(x, ImageBuffer):
        return ImageBuffer(np.clip(arr, 0.0, 1.0))
    return LatentTensor(arr)


def _crop_dims(h: int, w: int, scale: float, align: int) -> tuple[int, int]:
    ch = (int(math.floor(h * scale + 1e-9)) // align) * align
    cw = (int(math.floor(w * scale + 1e-9)) // align) * align
    if ch < align or cw < align:
        raise ShapeError(f"crop of {h}x{w} at scale {scale} leaves nothing at alignment {align}")
    return ch, cw


def center_offset(n: int, s: int) -> int:
    return (n - s + 1) // 2


def apply(x: Carrier, spec: AttackSpec, *, align: int = 1, seed: int | None = None,
          trial_id: str | None = None) -> Carrier:
    """Apply one attack. ``align`` snaps crop sizes down to codec-factor multiples;
    ``seed`` overrides the attack's own seed (used by the benchmark runner)."""
    if not isinstance(x, (ImageBuffer, LatentTensor)):
        raise TypeError(f"cannot attack {type(x).__name__}")
    is_image = isinstance(x, ImageBuffer)
    v = _values(x).astype(np.float64)

    if isinstance(spec, Contrast):
        if not is_image:
            raise ContractError("contrast applies to images")
        return _rewrap(x, 0.5 + spec.factor * (v - 0.5))

    if isinstance(spec, GaussianBlur):
        if spec.radius == 0:
            return x
        sigma = spec.radius / 2.0
        out = gaussian_filter1d(v, sigma, axis=0, mode="reflect", truncate=3.0)
        out = gaussian_filter1d(out, sigma, axis=1, mode="reflect", truncate=3.0)
        return _rewrap(x, out)

    if isinstance(spec, AdditiveNoise):
        if spec.sigma == 0:
            return x
        rng = np.random.default_rng(spec.seed if seed is None else seed)
        return _rewrap(x, v + rng.normal(0.0, spec.sigma, size=v.shape))

    if isinstance(spec, Quantize8):
        return _rewrap(x, np.rint(v * 255.0) / 255.0)

    if isinstance(spec, (CenterCrop, RandomCrop)):
        h, w = v.shape[:2]
        ch, cw = _crop_dims(h, w, spec.scale, align)
        if isinstance(spec, CenterCrop):
            top, left = center_offset(h, ch), center_offset(w, cw)
        else:
            rng = np.random.default_rng(spec.seed if seed is None else seed)
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
        return _rewrap(x, v[top:top + ch, left:left + cw])

    if isinstance(spec, LatentCenterCrop):
        if is_image:
            raise ContractError("latent center crop applies to latents")
        h, w = v.shape[:2]
        if not 1 <= spec.size <= min(h, w):
            raise ShapeError(f"cannot crop {h}x{w} latent to {spec.size}")
        top, left = center_offset(h, spec.size), center_offset(w, spec.size)
        return LatentTensor(v[top:top + spec.size, left:left + spec.size])

    if isinstance(spec, External):
        if trial_id is None:
            raise ContractError("external attack needs a trial id")
        path = spec.path_for(trial_id, latent=not is_image)
        return load_image(path) if is_image else load_latent(path)

    raise TypeError(f"unknown attack {spec!r}")


def apply_chain(x: Carrier, chain, **kwargs) -> Carrier:
    for spec in chain:
        x = apply(x, spec, **kwargs)
    return x


_KINDS = {
    "contrast": Contrast,
    "blur": GaussianBlur,
    "noise": AdditiveNoise,
    "quantize8": Quantize8,
    "center_crop": CenterCrop,
    "random_crop": RandomCrop,
    "latent_center_crop": LatentCenterCrop,
    "external": External,
}


def parse_attack(d: dict) -> AttackSpec:
    """Build an attack from a dict like ``{"kind": "noise", "sigma": 0.05}``."""
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown attack kind {kind!r}; expected one of {sorted(_KINDS)}")
    return _KINDS[kind](**d)


def chain_label(chain) -> str:
    return "+".join(a.label() for a in chain) or "none"
