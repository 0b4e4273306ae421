"""Phase modulation of 2x2 spectral blocks and the matching bit detectors.

A block holds four complex coefficients ``c1, c2, c3, c4`` in row-major
order. The left column (c1, c3) anchors the relative variants.

* APM: every element's phase is forced to +pi/2 (bit 1) or -pi/2 (bit 0).
* PCQ: every element's phase snaps to the nearest point of the bit's
  constellation.
* IPS: c2 and c4 take the anchor phase, plus pi for bit 0.
* SPS: c2 and c4 move a fraction ``gamma`` of the way to the IPS target.

All block functions are vectorized over leading axes: ``blocks`` has shape
``(..., 4)`` and ``bits`` the matching ``(...)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .layout import BlockPlan
from .tensor import Message

TWO_PI = 2.0 * np.pi


class Variant(str, enum.Enum):
    APM = "apm"
    PCQ = "pcq"
    IPS = "ips"
    SPS = "sps"

    @property
    def relative(self) -> bool:
        return self in (Variant.IPS, Variant.SPS)


def angular_distance(a, b):
    """Minimum distance between angles on the circle, in [0, pi]."""
    d = np.mod(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)), TWO_PI)
    out = np.minimum(d, TWO_PI - d)
    return float(out) if out.ndim == 0 else out


def _canonical_phases(values) -> np.ndarray:
    p = np.asarray(values, dtype=np.float64).ravel()
    # fold into (-pi, pi]
    p = np.where(p <= -np.pi, p + TWO_PI, np.where(p > np.pi, p - TWO_PI, p))
    return np.sort(p)


@dataclass(frozen=True)
class PcqConstellations:
    """Two disjoint phase sets; bit ``m`` snaps onto ``p1`` if m else ``p0``.

    The defaults interleave an 8-point circle: bit 0 owns the axes and
    bit 1 the diagonals, so embedding moves a phase by at most pi/4.
    """

    p0: tuple[float, ...] = (-np.pi / 2, 0.0, np.pi / 2, np.pi)
    p1: tuple[float, ...] = (-3 * np.pi / 4, -np.pi / 4, np.pi / 4, 3 * np.pi / 4)

    def __post_init__(self):
        p0, p1 = _canonical_phases(self.p0), _canonical_phases(self.p1)
        if p0.size == 0 or p1.size == 0:
            raise ValueError("constellations must be non-empty")
        sep = angular_distance(p0[:, None], p1[None, :]).min()
        if sep < np.pi / 4 - 1e-12:
            raise ValueError(f"constellations must be at least pi/4 apart, got {sep:.4f}")
        object.__setattr__(self, "p0", tuple(p0.tolist()))
        object.__setattr__(self, "p1", tuple(p1.tolist()))

    def points(self, bit: int) -> np.ndarray:
        return np.array(self.p1 if bit else self.p0)


@dataclass(frozen=True)
class ModemParams:
    gamma: float = 0.8
    constellations: PcqConstellations = field(default_factory=PcqConstellations)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


DEFAULT_PARAMS = ModemParams()


def snap_phase(phase, points: np.ndarray) -> np.ndarray:
    """Nearest point by angular distance; ties go to the smaller phase value."""
    d = angular_distance(np.asarray(phase)[..., None], points)
    return points[np.argmin(d, axis=-1)]


def _prepare(blocks, bits):
    blocks = np.asarray(blocks, dtype=np.complex128)
    if blocks.shape[-1:] != (4,):
        raise ShapeError(f"blocks must have a trailing axis of 4, got {blocks.shape}")
    bits = np.asarray(bits).astype(np.int64)
    if bits.shape != blocks.shape[:-1]:
        raise ShapeError(f"bits shape {bits.shape} does not match blocks {blocks.shape[:-1]}")
    return blocks, bits


def embed_blocks(blocks, bits, variant: Variant | str, params: ModemParams = DEFAULT_PARAMS):
    """Modulate blocks. Returns ``(new_blocks, zero_elements, skipped_blocks)``.

    ``zero_elements`` flags coefficients with no phase (left at zero by the
    absolute variants); ``skipped_blocks`` flags relative-variant blocks whose
    anchor is zero and which are therefore returned unchanged.
    """
    variant = Variant(variant)
    blocks, bits = _prepare(blocks, bits)
    mag = np.abs(blocks)
    phase = np.angle(blocks)
    zero = mag == 0.0
    skipped = np.zeros(bits.shape, dtype=bool)

    if variant is Variant.APM:
        target = np.where(bits[..., None] == 1, np.pi / 2, -np.pi / 2)
        return mag * np.exp(1j * target), zero, skipped

    if variant is Variant.PCQ:
        c = params.constellations
        target = np.where(
            bits[..., None] == 1, snap_phase(phase, c.points(1)), snap_phase(phase, c.points(0))
        )
        return mag * np.exp(1j * target), zero, skipped

    out = blocks.copy()
    skipped = zero[..., 0] | zero[..., 2]
    flip = (1 - bits) * np.pi
    gamma = 1.0 if variant is Variant.IPS else params.gamma
    for k, anchor in ((1, 0), (3, 2)):
        target = mag[..., k] * np.exp(1j * (phase[..., anchor] + flip))
        new = target if variant is Variant.IPS else (1.0 - gamma) * blocks[..., k] + gamma * target
        out[..., k] = np.where(skipped, blocks[..., k], new)
    return out, zero & ~skipped[..., None], skipped


def detect_blocks(blocks, variant: Variant | str, params: ModemParams = DEFAULT_PARAMS):
    """Score blocks and decide bits. Returns ``(bits, scores)``; score 0 -> bit 0."""
    variant = Variant(variant)
    blocks = np.asarray(blocks, dtype=np.complex128)
    if blocks.shape[-1:] != (4,):
        raise ShapeError(f"blocks must have a trailing axis of 4, got {blocks.shape}")
    phase = np.angle(blocks)  # zero coefficients read as phase 0
    if variant is Variant.APM:
        score = phase.sum(axis=-1)
    elif variant is Variant.PCQ:
        c = params.constellations
        d0 = angular_distance(phase[..., None], c.points(0)).min(axis=-1).sum(axis=-1)
        d1 = angular_distance(phase[..., None], c.points(1)).min(axis=-1).sum(axis=-1)
        score = d0 - d1
    else:
        score = np.cos(phase[..., 0] - phase[..., 1]) + np.cos(phase[..., 2] - phase[..., 3])
    return (score > 0).astype(np.uint8), score


def embed_block(block, bit: int, variant: Variant | str, params: ModemParams = DEFAULT_PARAMS) -> np.ndarray:
    new, _, _ = embed_blocks(np.asarray(block)[None, :], np.array([bit]), variant, params)
    return new[0]


def detect_block(block, variant: Variant | str, params: ModemParams = DEFAULT_PARAMS) -> tuple[int, float]:
    bits, score = detect_blocks(np.asarray(block)[None, :], variant, params)
    return int(bits[0]), float(score[0])


@dataclass
class EmbedStats:
    zero_elements: int = 0
    skipped_blocks: int = 0


def _check_spectra(spectra: np.ndarray, plan: BlockPlan) -> np.ndarray:
    spectra = np.asarray(spectra)
    n = plan.config.crop_size
    if spectra.ndim != 3 or spectra.shape[1:] != (n, n):
        raise ShapeError(f"spectra must be (C, {n}, {n}), got {spectra.shape}")
    if spectra.shape[0] < plan.n_channels:
        raise ShapeError(f"plan needs {plan.n_channels} channels, spectra have {spectra.shape[0]}")
    return spectra


def embed_message(spectra, plan: BlockPlan, msg: Message, variant: Variant | str,
                  params: ModemParams = DEFAULT_PARAMS):
    """Write bit ``i`` of channel ``c`` (message index ``c*bpc + i``) into block ``i``.

    ``spectra`` is a ``(C, H, W)`` complex array. Returns the modified copy,
    the touched bins per channel as ``(n, 2)`` index arrays, and stats.
    Mirrors are not written here; that is :func:`spectrum.enforce_hermitian`'s job.
    """
    variant = Variant(variant)
    spectra = _check_spectra(spectra, plan)
    if len(msg) != plan.capacity:
        raise ShapeError(f"message has {len(msg)} bits, plan capacity is {plan.capacity}")
    out = np.array(spectra, dtype=np.complex128, copy=True)
    nb = len(plan.blocks)
    stats = EmbedStats()
    touched = []
    cols_used = [1, 3] if variant.relative else [0, 1, 2, 3]
    for c in range(plan.n_channels):
        bits = msg.bits[c * nb:(c + 1) * nb]
        blocks = out[c][plan.rows, plan.cols]
        new, zero, skipped = embed_blocks(blocks, bits, variant, params)
        out[c][plan.rows, plan.cols] = new
        stats.zero_elements += int(zero.sum())
        stats.skipped_blocks += int(skipped.sum())
        live = ~skipped
        r = plan.rows[live][:, cols_used].ravel()
        k = plan.cols[live][:, cols_used].ravel()
        touched.append(np.stack([r, k], axis=1))
    return out, touched, stats


def extract_message(spectra, plan: BlockPlan, variant: Variant | str,
                    params: ModemParams = DEFAULT_PARAMS) -> tuple[Message, np.ndarray]:
    """Read every plan block; returns the message and one soft score per bit."""
    spectra = _check_spectra(spectra, plan)
    blocks = np.stack([spectra[c][plan.rows, plan.cols] for c in range(plan.n_channels)])
    bits, scores = detect_blocks(blocks, variant, params)
    return Message(bits.ravel()), scores.ravel()
