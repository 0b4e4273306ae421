"""End-to-end embedding and blind detection.

Embedding: encode -> center crop -> per-channel DFT -> modulate ->
Hermitian restore -> inverse DFT -> realize -> paste back -> decode.
Detection re-derives the block plan from the configuration and mirrors the
path up to bit extraction; nothing travels with the image but the pixels.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import spectrum
from .codec import Codec, IdentityCodec, clipped_fraction
from .errors import ShapeError
from .layout import BandConfig, BlockPlan, build_plan
from .modem import DEFAULT_PARAMS, ModemParams, Variant, embed_message, extract_message
from .spectrum import RealizeMode
from .stats import Codebook, ThresholdSpec, bonferroni_threshold, threshold
from .tensor import ImageBuffer, LatentTensor, Message

Carrier = ImageBuffer | LatentTensor


@dataclass(frozen=True)
class PipelineConfig:
    band: BandConfig = field(default_factory=BandConfig)
    variant: Variant = Variant.APM
    params: ModemParams = DEFAULT_PARAMS
    codec: Codec = field(default_factory=IdentityCodec)
    realize_mode: RealizeMode = RealizeMode.FREQUENCY_RESTORED
    translation_search: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "realize_mode", RealizeMode(self.realize_mode))
        if self.translation_search < 0:
            raise ValueError("translation_search must be non-negative")

    @property
    def plan(self) -> BlockPlan:
        return build_plan(self.band)

    @property
    def message_length(self) -> int:
        return self.band.message_length

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Placement:
    top: int
    left: int
    size: int


def crop_center(lat: LatentTensor, s: int) -> tuple[LatentTensor, Placement]:
    if not 1 <= s <= min(lat.height, lat.width):
        raise ShapeError(f"crop size {s} exceeds latent {lat.height}x{lat.width}")
    top, left = (lat.height - s) // 2, (lat.width - s) // 2
    return LatentTensor(lat.data[top:top + s, left:left + s]), Placement(top, left, s)


def paste_center(lat: LatentTensor, crop: LatentTensor, placement: Placement) -> LatentTensor:
    p = placement
    if crop.shape[:2] != (p.size, p.size) or crop.channels != lat.channels:
        raise ShapeError(f"crop {crop.shape} does not fit placement {p} in {lat.shape}")
    if p.top + p.size > lat.height or p.left + p.size > lat.width:
        raise ShapeError(f"placement {p} falls outside latent {lat.shape}")
    out = lat.data.copy()
    out[p.top:p.top + p.size, p.left:p.left + p.size] = crop.data
    return LatentTensor(out)


@dataclass
class EmbedDiagnostics:
    zero_elements: int = 0
    skipped_blocks: int = 0
    clipping_fraction: float = 0.0
    max_imag_residual: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _to_latent(x: Carrier, cfg: PipelineConfig) -> LatentTensor:
    if isinstance(x, LatentTensor):
        return x
    if isinstance(x, ImageBuffer):
        return cfg.codec.encode(x)
    raise TypeError(f"expected ImageBuffer or LatentTensor, got {type(x).__name__}")


def _check_channels(lat: LatentTensor, cfg: PipelineConfig):
    if lat.channels < cfg.band.n_channels:
        raise ShapeError(f"latent has {lat.channels} channels, configuration needs {cfg.band.n_channels}")


def embed_latent(lat: LatentTensor, msg: Message, cfg: PipelineConfig) -> tuple[LatentTensor, EmbedDiagnostics]:
    """The codec-free transform: crop, modulate, restore, paste."""
    plan = cfg.plan
    if len(msg) != plan.capacity:
        raise ShapeError(f"message has {len(msg)} bits, configuration carries {plan.capacity}")
    _check_channels(lat, cfg)
    nc = cfg.band.n_channels
    crop, place = crop_center(lat, cfg.band.crop_size)
    planes = np.moveaxis(crop.data[:, :, :nc].astype(np.float64), 2, 0)
    spectra = np.fft.fft2(planes)
    spectra, touched, stats = embed_message(spectra, plan, msg, cfg.variant, cfg.params)
    out = crop.data.astype(np.float64)
    diag = EmbedDiagnostics(stats.zero_elements, stats.skipped_blocks)
    for c in range(nc):
        spec = spectra[c]
        if cfg.realize_mode is RealizeMode.FREQUENCY_RESTORED:
            spec = spectrum.enforce_hermitian(spec, touched[c])
        grid = spectrum.idft2(spec)
        diag.max_imag_residual = max(diag.max_imag_residual, spectrum.imag_residual(grid))
        out[:, :, c] = spectrum.realize(grid, cfg.realize_mode)
    return paste_center(lat, LatentTensor(out), place), diag


def embed(x: Carrier, msg: Message, cfg: PipelineConfig) -> tuple[Carrier, EmbedDiagnostics]:
    """Watermark an image or latent; the output has the input's kind."""
    lat = _to_latent(x, cfg)
    marked, diag = embed_latent(lat, msg, cfg)
    if isinstance(x, ImageBuffer):
        diag.clipping_fraction = clipped_fraction(marked)
        return cfg.codec.decode(marked), diag
    return marked, diag


@dataclass
class Extraction:
    message: Message
    scores: np.ndarray
    offset: tuple[int, int] = (0, 0)
    candidate_shifts: int = 1


def extract_latent(lat: LatentTensor, cfg: PipelineConfig, shift: tuple[int, int] = (0, 0)) -> tuple[Message, np.ndarray]:
    plan = cfg.plan
    _check_channels(lat, cfg)
    s = cfg.band.crop_size
    if s > min(lat.height, lat.width):
        raise ShapeError(f"crop size {s} exceeds latent {lat.height}x{lat.width}")
    top = (lat.height - s) // 2 + shift[0]
    left = (lat.width - s) // 2 + shift[1]
    if top < 0 or left < 0 or top + s > lat.height or left + s > lat.width:
        raise ShapeError(f"shift {shift} moves the crop outside the latent")
    window = lat.data[top:top + s, left:left + s, :cfg.band.n_channels].astype(np.float64)
    spectra = np.fft.fft2(np.moveaxis(window, 2, 0))
    return extract_message(spectra, plan, cfg.variant, cfg.params)


def _shifts(lat: LatentTensor, cfg: PipelineConfig) -> list[tuple[int, int]]:
    w = cfg.translation_search
    s = cfg.band.crop_size
    top0, left0 = (lat.height - s) // 2, (lat.width - s) // 2
    out = []
    for dy in range(-w, w + 1):
        for dx in range(-w, w + 1):
            if 0 <= top0 + dy <= lat.height - s and 0 <= left0 + dx <= lat.width - s:
                out.append((dy, dx))
    # search order: nearest shift first so ties keep the smallest displacement
    return sorted(out, key=lambda d: (abs(d[0]) + abs(d[1]), d))


def _search(lat: LatentTensor, cfg: PipelineConfig, score) -> Extraction:
    best = None
    shifts = _shifts(lat, cfg)
    if not shifts:
        raise ShapeError(f"crop size {cfg.band.crop_size} exceeds latent {lat.height}x{lat.width}")
    for sh in shifts:
        msg, scores = extract_latent(lat, cfg, sh)
        value = score(msg)
        if best is None or value > best[0]:
            best = (value, Extraction(msg, scores, sh, len(shifts)))
    return best[1]


@dataclass
class DetectionReport:
    message: Message
    scores: np.ndarray
    bit_accuracy: float
    matches: int
    decision: bool
    threshold: ThresholdSpec
    task: str
    user_id: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "decision": bool(self.decision),
            "bit_accuracy": self.bit_accuracy,
            "matches": self.matches,
            "user_id": self.user_id,
            "threshold": self.threshold.to_dict(),
            "message": self.message.to_hex(),
            "bits": len(self.message),
            "scores": [float(s) for s in self.scores],
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _diagnostics(x: Carrier, lat: LatentTensor, ext: Extraction) -> dict:
    return {
        "clipping_fraction": clipped_fraction(lat) if isinstance(x, ImageBuffer) else 0.0,
        "translation_offset": list(ext.offset),
        "candidate_shifts": ext.candidate_shifts,
    }


def verify(x: Carrier, reference: Message, cfg: PipelineConfig, alpha: float = 0.01) -> DetectionReport:
    if len(reference) != cfg.message_length:
        raise ShapeError(f"reference has {len(reference)} bits, configuration carries {cfg.message_length}")
    lat = _to_latent(x, cfg)
    ref = reference.bits
    ext = _search(lat, cfg, lambda m: int(np.count_nonzero(m.bits == ref)))
    matches = int(np.count_nonzero(ext.message.bits == ref))
    thr = threshold(len(reference), alpha)
    return DetectionReport(
        message=ext.message, scores=ext.scores, bit_accuracy=matches / len(reference),
        matches=matches, decision=thr.detects(matches), threshold=thr, task="verify",
        diagnostics=_diagnostics(x, lat, ext),
    )


def identify(x: Carrier, codebook: Codebook, cfg: PipelineConfig, alpha: float = 0.01,
             population: int | None = None) -> DetectionReport:
    """Match the extracted message against a codebook; ties go to the lowest index."""
    if codebook.n_bits != cfg.message_length:
        raise ShapeError(f"codebook entries have {codebook.n_bits} bits, configuration carries {cfg.message_length}")
    lat = _to_latent(x, cfg)
    if cfg.translation_search:
        ext = _search(lat, cfg, lambda m: codebook.match(m)[1])
    else:
        msg, scores = extract_latent(lat, cfg)
        ext = Extraction(msg, scores)
    user, matches = codebook.match(ext.message)
    thr = bonferroni_threshold(codebook.n_bits, alpha, population or len(codebook))
    return DetectionReport(
        message=ext.message, scores=ext.scores, bit_accuracy=matches / codebook.n_bits,
        matches=matches, decision=thr.detects(matches), threshold=thr, task="identify",
        user_id=user, diagnostics=_diagnostics(x, lat, ext),
    )
