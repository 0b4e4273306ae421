"""Mid-band block selection shared by embedder and detector.

Candidates are 2x2 blocks whose top-left corner ``(du, dv)`` (centered
offsets from DC) is even-aligned and lies in the strict upper half-plane
``du <= -2``. Their conjugate mirrors therefore fall in the lower half and
never collide with another selected bin. Candidates are filtered by the
radius of the block centroid ``(du + 0.5, dv + 0.5)`` and, optionally, by
distance from the two principal axes, then ordered canonically by
(radius, angle, du, dv).

A key turns the canonical list into a plan: candidate ``i`` receives the
score ``splitmix64(key, i)`` and candidates are sorted by (score, i). The
first ``bits_per_channel`` entries are used, identically for every channel.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import CapacityError
from .prng import MASK64, splitmix64
from .spectrum import mirror, to_unshifted


@dataclass(frozen=True)
class BandConfig:
    crop_size: int = 44
    r_lo: float = 10.0
    r_hi: float = 18.0
    bits_per_channel: int = 32
    n_channels: int = 4
    axis_offset_enabled: bool = True
    axis_offset_width: float = 2.0
    key: int = 0

    def __post_init__(self):
        if self.crop_size < 4:
            raise ValueError(f"crop_size must be at least 4, got {self.crop_size}")
        if not 0 < self.r_lo < self.r_hi < self.crop_size / 2:
            raise ValueError(
                f"need 0 < r_lo < r_hi < crop_size/2, got r_lo={self.r_lo}, r_hi={self.r_hi}, crop={self.crop_size}"
            )
        if self.bits_per_channel < 1 or self.n_channels < 1:
            raise ValueError("bits_per_channel and n_channels must be positive")
        if self.axis_offset_width < 0:
            raise ValueError("axis_offset_width must be non-negative")
        if not 0 <= self.key <= MASK64:
            raise ValueError("key must be an unsigned 64-bit integer")

    @property
    def message_length(self) -> int:
        return self.bits_per_channel * self.n_channels


class BlockPos(NamedTuple):
    """Top-left centered offset of a 2x2 block; elements run row-major."""

    du: int
    dv: int

    @property
    def radius(self) -> float:
        return math.hypot(self.du + 0.5, self.dv + 0.5)

    def centered_bins(self) -> list[tuple[int, int]]:
        return [(self.du, self.dv), (self.du, self.dv + 1), (self.du + 1, self.dv), (self.du + 1, self.dv + 1)]

    def bins(self, n: int) -> list[tuple[int, int]]:
        """Unshifted indices of c1..c4 in an ``n x n`` spectrum."""
        return [(to_unshifted(a, n), to_unshifted(b, n)) for a, b in self.centered_bins()]


def _inside(d: int, n: int) -> bool:
    # strictly inside (-n/2, n/2): excludes the Nyquist row/column for even n
    return -n < 2 * d < n


def candidate_ok(du: int, dv: int, cfg: BandConfig) -> bool:
    n = cfg.crop_size
    if du % 2 or dv % 2 or du > -2:
        return False
    if not (_inside(du, n) and _inside(du + 1, n) and _inside(dv, n) and _inside(dv + 1, n)):
        return False
    q4 = (2 * du + 1) ** 2 + (2 * dv + 1) ** 2  # 4 * radius**2, exact
    if not (4 * cfg.r_lo**2 <= q4 <= 4 * cfg.r_hi**2):
        return False
    if cfg.axis_offset_enabled:
        w2 = 2 * cfg.axis_offset_width
        if abs(2 * du + 1) <= w2 or abs(2 * dv + 1) <= w2:
            return False
    return True


def _canonical_key(p: BlockPos):
    q4 = (2 * p.du + 1) ** 2 + (2 * p.dv + 1) ** 2
    return (q4, math.atan2(p.dv + 0.5, p.du + 0.5), p.du, p.dv)


def enumerate_candidates(cfg: BandConfig) -> list[BlockPos]:
    half = cfg.crop_size // 2 + 1
    found = [
        BlockPos(du, dv)
        for du in range(-half, 0)
        for dv in range(-half, half + 1)
        if candidate_ok(du, dv, cfg)
    ]
    return sorted(found, key=_canonical_key)


@dataclass(frozen=True, eq=False)
class BlockPlan:
    """Ordered blocks per channel plus index arrays for vectorized access.

    ``rows``/``cols`` have shape ``(bits_per_channel, 4)`` and hold the
    unshifted indices of c1..c4; ``mirror_rows``/``mirror_cols`` hold their
    conjugate partners. All channels share the same blocks.
    """

    config: BandConfig
    blocks: tuple[BlockPos, ...]
    rows: np.ndarray
    cols: np.ndarray
    mirror_rows: np.ndarray
    mirror_cols: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.config.n_channels

    @property
    def capacity(self) -> int:
        return len(self.blocks) * self.config.n_channels

    def channel_blocks(self, c: int) -> tuple[BlockPos, ...]:
        if not 0 <= c < self.n_channels:
            raise IndexError(c)
        return self.blocks

    def mirror_map(self) -> dict[tuple[int, int], tuple[int, int]]:
        pairs = zip(self.rows.ravel(), self.cols.ravel(), self.mirror_rows.ravel(), self.mirror_cols.ravel())
        return {(int(a), int(b)): (int(c), int(d)) for a, b, c, d in pairs}

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "channels": {str(c): [[p.du, p.dv] for p in self.blocks] for c in range(self.n_channels)},
        }

    def to_json(self) -> str:
        """Canonical JSON export, stable byte-for-byte for a given config."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    def __eq__(self, other):
        if not isinstance(other, BlockPlan):
            return NotImplemented
        return self.config == other.config and self.blocks == other.blocks


def keyed_order(n: int, key: int) -> list[int]:
    return sorted(range(n), key=lambda i: (splitmix64(key, i), i))


@functools.lru_cache(maxsize=64)
def build_plan(cfg: BandConfig) -> BlockPlan:
    cands = enumerate_candidates(cfg)
    if len(cands) < cfg.bits_per_channel:
        raise CapacityError(
            f"band holds {len(cands)} candidate blocks but {cfg.bits_per_channel} bits per channel are required"
        )
    order = keyed_order(len(cands), cfg.key)
    blocks = tuple(cands[i] for i in order[: cfg.bits_per_channel])
    n = cfg.crop_size
    idx = np.array([b.bins(n) for b in blocks], dtype=np.int64).reshape(-1, 4, 2)
    rows, cols = idx[..., 0], idx[..., 1]
    mr, mc = mirror(rows, cols, n, n)
    for a in (rows, cols, mr, mc):
        a.flags.writeable = False
    return BlockPlan(cfg, blocks, rows, cols, mr, mc)
