"""Exact binomial thresholds, codebooks and TPR evaluation.

Under the null hypothesis every extracted bit matches the reference with
probability 1/2, so the match count is Binomial(L, 1/2). The verification
threshold is the smallest ``k`` with ``P(matches >= k) <= alpha``; the
identification threshold replaces ``alpha`` with ``alpha / N``. Tails are
summed with exact integers, and the comparison against ``alpha`` is exact
rational arithmetic.
"""

from __future__ import annotations

import functools
import json
import math
import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import FormatError, ShapeError, ThresholdError
from .prng import splitmix64_array
from .tensor import Message

MAX_BITS = 4096


@functools.lru_cache(maxsize=32)
def _tail_numerators(L: int) -> tuple[int, ...]:
    # tails[k] = sum_{j >= k} C(L, j), for k = 0..L+1
    tails = [0] * (L + 2)
    for k in range(L, -1, -1):
        tails[k] = tails[k + 1] + math.comb(L, k)
    return tuple(tails)


def _check_L(L: int):
    if not 0 <= L <= MAX_BITS:
        raise ValueError(f"L must lie in [0, {MAX_BITS}], got {L}")


def binom_tail(L: int, k: int) -> float:
    """P(Binomial(L, 1/2) >= k), correctly rounded to double precision."""
    _check_L(L)
    if k > L:
        raise ValueError(f"k={k} exceeds L={L}")
    if k <= 0:
        return 1.0
    return _tail_numerators(L)[k] / (1 << L)


@dataclass(frozen=True)
class ThresholdSpec:
    L: int
    alpha: float
    N: int
    k: int

    @property
    def tau(self) -> float:
        return self.k / self.L

    @property
    def tail(self) -> float:
        return binom_tail(self.L, self.k)

    def detects(self, matches: int) -> bool:
        return matches >= self.k

    def to_dict(self) -> dict:
        return {"L": self.L, "alpha": self.alpha, "N": self.N, "k": self.k,
                "tau": self.tau, "tail": self.tail}


def _min_k(L: int, level: Fraction) -> int:
    tails = _tail_numerators(L)
    denom = 1 << L
    # tails are decreasing in k: binary search for the first k meeting the level
    lo, hi = 0, L + 1
    while lo < hi:
        mid = (lo + hi) // 2
        if Fraction(tails[mid], denom) <= level:
            hi = mid
        else:
            lo = mid + 1
    if lo > L:
        raise ThresholdError(
            f"no match count reaches significance {float(level):.3g} with L={L}; "
            f"the smallest tail is 2^-{L}"
        )
    return lo


def threshold(L: int, alpha: float = 0.01) -> ThresholdSpec:
    return bonferroni_threshold(L, alpha, 1)


def bonferroni_threshold(L: int, alpha: float = 0.01, N: int = 10**6) -> ThresholdSpec:
    _check_L(L)
    if L < 1:
        raise ValueError("L must be positive")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if N < 1:
        raise ValueError(f"population N must be >= 1, got {N}")
    k = _min_k(L, Fraction(alpha) / N)
    return ThresholdSpec(L=L, alpha=float(alpha), N=int(N), k=k)


def evaluate(rates, tau: float) -> float:
    """Fraction of trials whose bit accuracy reaches ``tau``."""
    rates = np.asarray(list(rates), dtype=np.float64)
    if rates.size == 0:
        raise ValueError("cannot evaluate an empty list of trials")
    return float(np.count_nonzero(rates >= tau)) / rates.size


# ---------------------------------------------------------------------------
# Codebooks
# ---------------------------------------------------------------------------

def _words(L: int) -> int:
    return -(-L // 64)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack ``(..., L)`` bits MSB-first into ``(..., ceil(L/64))`` uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    L = bits.shape[-1]
    W = _words(L)
    padded = np.zeros(bits.shape[:-1] + (W * 64,), dtype=np.uint8)
    padded[..., :L] = bits
    raw = np.packbits(padded, axis=-1)
    return raw.view(">u8").astype(np.uint64).reshape(bits.shape[:-1] + (W,))


def unpack_bits(words: np.ndarray, L: int) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint64)
    raw = np.ascontiguousarray(words, dtype=">u8").view(np.uint8).reshape(words.shape[:-1] + (-1,))
    return np.unpackbits(raw, axis=-1)[..., :L]


@dataclass(frozen=True, eq=False)
class Codebook:
    """N messages of L bits, stored word-major as ``(ceil(L/64), N)`` uint64."""

    words: np.ndarray
    n_bits: int
    seed: int | None = None

    def __len__(self) -> int:
        return self.words.shape[1]

    def message(self, index: int) -> Message:
        return Message(unpack_bits(self.words[:, index], self.n_bits))

    def messages(self) -> list[Message]:
        return [self.message(i) for i in range(len(self))]

    def match(self, msg: Message) -> tuple[int, int]:
        """Return ``(index, matches)`` of the closest entry; ties go to the lowest index."""
        if len(msg) != self.n_bits:
            raise ShapeError(f"query has {len(msg)} bits, codebook entries have {self.n_bits}")
        q = pack_bits(msg.bits)
        dist = np.bitwise_count(self.words[0] ^ q[0]).astype(np.uint16)
        for w in range(1, q.size):
            dist += np.bitwise_count(self.words[w] ^ q[w])
        best = int(np.argmin(dist))
        return best, self.n_bits - int(dist[best])

    @classmethod
    def from_messages(cls, msgs, seed: int | None = None) -> "Codebook":
        msgs = list(msgs)
        if not msgs:
            raise ValueError("codebook must be non-empty")
        L = len(msgs[0])
        if any(len(m) != L for m in msgs):
            raise ShapeError("ragged codebook: entries differ in length")
        bits = np.stack([m.bits for m in msgs])
        return cls(np.ascontiguousarray(pack_bits(bits).T), L, seed)


def generate_codebook(N: int, L: int, seed: int = 0) -> Codebook:
    """Deterministic codebook: word ``w`` of entry ``n`` is splitmix64 output ``n*W + w``.

    Bits are read MSB-first from the words; padding bits past ``L`` are cleared.
    """
    if N < 1 or L < 1:
        raise ValueError("codebook needs N >= 1 and L >= 1")
    W = _words(L)
    pos = np.arange(N, dtype=np.uint64)[None, :] * np.uint64(W) + np.arange(W, dtype=np.uint64)[:, None]
    words = splitmix64_array(seed, pos)
    spare = W * 64 - L
    if spare:
        words[-1] &= ~np.uint64((1 << spare) - 1)
    return Codebook(np.ascontiguousarray(words), L, seed)


def save_codebook(cb: Codebook, path: str | os.PathLike) -> None:
    """Flat binary, ``ceil(L/8)`` bytes per entry row-major, plus ``<path>.json``."""
    nbytes = -(-cb.n_bits // 8)
    raw = np.ascontiguousarray(cb.words.T, dtype=">u8").view(np.uint8).reshape(len(cb), -1)[:, :nbytes]
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(raw).tobytes())
    with open(os.fspath(path) + ".json", "w") as fh:
        json.dump({"N": len(cb), "L": cb.n_bits, "seed": cb.seed}, fh, sort_keys=True)
        fh.write("\n")


def load_codebook(path: str | os.PathLike) -> Codebook:
    with open(os.fspath(path) + ".json") as fh:
        meta = json.load(fh)
    try:
        N, L = int(meta["N"]), int(meta["L"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}.json: missing or invalid N/L") from exc
    nbytes = -(-L // 8)
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != N * nbytes:
        raise FormatError(f"{path}: expected {N * nbytes} bytes for N={N}, L={L}, found {raw.size}")
    W = _words(L)
    padded = np.zeros((N, W * 8), dtype=np.uint8)
    padded[:, :nbytes] = raw.reshape(N, nbytes)
    words = padded.view(">u8").astype(np.uint64).reshape(N, W)
    spare = W * 64 - L
    if spare and (words[:, -1] & np.uint64((1 << spare) - 1)).any():
        raise FormatError(f"{path}: padding bits past L={L} are not zero")
    return Codebook(np.ascontiguousarray(words.T), L, meta.get("seed"))
